#ifndef RADDEPTH_NN_HPP
#define RADDEPTH_NN_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

// Minimal define-by-run autograd over NCHW float tensors, just enough for
// the residual fusion encoders and the UpProj decoder. Heavy lifting lives
// in rd::kernels.

namespace rd::nn {

struct Tensor {
  std::array<int, 4> shape{0, 0, 0, 0};  // N,C,H,W
  std::vector<float> v;

  Tensor() = default;
  Tensor(int n, int c, int h, int w)
      : shape{n, c, h, w}, v(size_t(n) * c * h * w, 0.0f) {}

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }
  size_t size() const { return v.size(); }
  float* data() { return v.data(); }
  const float* data() const { return v.data(); }
};

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor val;
  Tensor grad;  // allocated lazily by ensure_grad
  bool requires_grad = false;
  bool is_param = false;
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad();
};

NodePtr make_input(Tensor t);
NodePtr make_param(Tensor t);

// Runs reverse-mode accumulation from the given roots; the caller seeds
// root->grad before calling. Graph edges are released afterwards so
// parameters survive while activations free.
void backward(const std::vector<NodePtr>& roots);

// ---- ops ------------------------------------------------------------------

NodePtr conv2d(NodePtr x, NodePtr w, NodePtr b, int stride, int pad);
NodePtr relu(NodePtr x);
NodePtr add(NodePtr a, NodePtr b);
NodePtr concat_channels(const std::vector<NodePtr>& xs);
NodePtr maxpool2x2(NodePtr x);
NodePtr upsample2x(NodePtr x);
// zero-pads bottom/right to (H,W); crop takes the top-left corner
NodePtr pad_bottom_right(NodePtr x, int H, int W);
NodePtr crop_top_left(NodePtr x, int H, int W);
// y = clamp(x*scale, lo, hi); gradient passes only strictly inside the range
NodePtr scale_clamp(NodePtr x, float scale, float lo, float hi);

// ---- layers ---------------------------------------------------------------

// Deterministic normal draws (Box-Muller over the raw mt19937_64 stream).
struct Init {
  uint64_t s0;
  explicit Init(uint64_t seed) : s0(seed) {}
  float normal(float stddev);
  void fill_kaiming(Tensor& t, int fan_in);
};

struct ParamEntry {
  std::string name;
  NodePtr node;
};
struct BufferEntry {
  std::string name;
  Tensor* tensor;
};

struct Conv2d {
  NodePtr weight, bias;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(int in_c, int out_c, int k, int stride, int pad, Init& init);
  NodePtr operator()(NodePtr x) const { return conv2d(x, weight, bias, stride, pad); }
  void collect(const std::string& prefix, std::vector<ParamEntry>& out) const;
};

struct BatchNorm2d {
  NodePtr gamma, beta;
  Tensor running_mean, running_var;
  float momentum = 0.1f;
  float eps = 1e-5f;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int channels);
  NodePtr operator()(NodePtr x, bool training);
  void collect(const std::string& prefix, std::vector<ParamEntry>& params,
               std::vector<BufferEntry>& buffers);
};

}  // namespace rd::nn

#endif
