#include "raddepth/nn.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "raddepth/kernels.hpp"

namespace rd::nn {

void Node::ensure_grad() {
  if (grad.size() != val.size()) {
    grad = Tensor(val.n(), val.c(), val.h(), val.w());
  }
}

NodePtr make_input(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  return n;
}

NodePtr make_param(Tensor t) {
  auto n = std::make_shared<Node>();
  n->val = std::move(t);
  n->requires_grad = true;
  n->is_param = true;
  n->ensure_grad();
  return n;
}

namespace {
NodePtr make_op(Tensor val, std::vector<NodePtr> parents,
                std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  for (const auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  return n;
}
}  // namespace

void backward(const std::vector<NodePtr>& roots) {
  // reverse DFS post-order = children before parents
  std::vector<Node*> topo;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  for (const auto& r : roots) {
    if (seen.count(r.get())) continue;
    stack.push_back({r.get(), 0});
    seen.insert(r.get());
    while (!stack.empty()) {
      auto& [node, idx] = stack.back();
      if (idx < node->parents.size()) {
        Node* p = node->parents[idx++].get();
        if (!seen.count(p) && p->requires_grad) {
          seen.insert(p);
          stack.push_back({p, 0});
        }
      } else {
        topo.push_back(node);
        stack.pop_back();
      }
    }
  }
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->val.size()) n->backward_fn(*n);
  }
  // release graph edges; parameters keep their grads
  for (Node* n : topo) {
    n->parents.clear();
    n->backward_fn = nullptr;
    if (!n->is_param) n->grad = Tensor();
  }
}

// ---- ops ------------------------------------------------------------------

NodePtr conv2d(NodePtr x, NodePtr w, NodePtr b, int stride, int pad) {
  const int N = x->val.n(), C = x->val.c(), H = x->val.h(), W = x->val.w();
  const int O = w->val.n(), k = w->val.h();
  if (w->val.c() != C) throw std::invalid_argument("conv2d: channel mismatch");
  const int OH = kernels::conv_out_dim(H, k, stride, pad);
  const int OW = kernels::conv_out_dim(W, k, stride, pad);
  Tensor y(N, O, OH, OW);
  kernels::conv2d_forward(x->val.data(), w->val.data(),
                          b ? b->val.data() : nullptr, y.data(), N, C, H, W, O,
                          k, stride, pad, nullptr);
  Node* xp = x.get();
  Node* wp = w.get();
  Node* bp = b.get();
  auto bw = [=](Node& self) {
    if (xp->requires_grad) xp->ensure_grad();
    wp->ensure_grad();
    if (bp) bp->ensure_grad();
    kernels::conv2d_backward(xp->val.data(), wp->val.data(), self.grad.data(),
                             xp->requires_grad ? xp->grad.data() : nullptr,
                             wp->grad.data(), bp ? bp->grad.data() : nullptr, N,
                             C, H, W, O, k, stride, pad, nullptr);
  };
  std::vector<NodePtr> parents = {x, w};
  if (b) parents.push_back(b);
  return make_op(std::move(y), std::move(parents), bw);
}

NodePtr relu(NodePtr x) {
  Tensor y = x->val;
  for (auto& v : y.v) v = v > 0 ? v : 0.0f;
  Node* xp = x.get();
  auto bw = [=](Node& self) {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (xp->val.v[i] > 0) xp->grad.v[i] += self.grad.v[i];
  };
  return make_op(std::move(y), {x}, bw);
}

NodePtr add(NodePtr a, NodePtr b) {
  if (a->val.shape != b->val.shape) throw std::invalid_argument("add: shape mismatch");
  Tensor y = a->val;
  for (size_t i = 0; i < y.size(); ++i) y.v[i] += b->val.v[i];
  Node* ap = a.get();
  Node* bp = b.get();
  auto bw = [=](Node& self) {
    for (Node* p : {ap, bp}) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) p->grad.v[i] += self.grad.v[i];
    }
  };
  return make_op(std::move(y), {a, b}, bw);
}

NodePtr concat_channels(const std::vector<NodePtr>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat: empty");
  const int N = xs[0]->val.n(), H = xs[0]->val.h(), W = xs[0]->val.w();
  int C = 0;
  for (const auto& x : xs) {
    if (x->val.n() != N || x->val.h() != H || x->val.w() != W)
      throw std::invalid_argument("concat: spatial shape mismatch");
    C += x->val.c();
  }
  Tensor y(N, C, H, W);
  const size_t plane = size_t(H) * W;
  for (int n = 0; n < N; ++n) {
    size_t off = 0;
    for (const auto& x : xs) {
      const size_t chunk = size_t(x->val.c()) * plane;
      std::copy_n(x->val.data() + size_t(n) * chunk, chunk,
                  y.data() + (size_t(n) * C) * plane + off);
      off += chunk;
    }
  }
  std::vector<Node*> raw;
  for (const auto& x : xs) raw.push_back(x.get());
  auto bw = [=](Node& self) {
    for (int n = 0; n < N; ++n) {
      size_t off = 0;
      for (Node* x : raw) {
        const size_t chunk = size_t(x->val.c()) * plane;
        if (x->requires_grad) {
          x->ensure_grad();
          const float* src = self.grad.data() + (size_t(n) * C) * plane + off;
          float* dst = x->grad.data() + size_t(n) * chunk;
          for (size_t i = 0; i < chunk; ++i) dst[i] += src[i];
        }
        off += chunk;
      }
    }
  };
  return make_op(std::move(y), xs, bw);
}

NodePtr maxpool2x2(NodePtr x) {
  const int N = x->val.n(), C = x->val.c(), H = x->val.h(), W = x->val.w();
  if (H % 2 || W % 2) throw std::invalid_argument("maxpool2x2: odd spatial size");
  Tensor y(N, C, H / 2, W / 2);
  auto argmax = std::make_shared<std::vector<int>>(y.size());
  kernels::maxpool2x2_forward(x->val.data(), y.data(), argmax->data(), N, C, H, W);
  Node* xp = x.get();
  auto bw = [=](Node& self) {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    kernels::maxpool2x2_backward(self.grad.data(), argmax->data(),
                                 xp->grad.data(), N, C, H, W);
  };
  return make_op(std::move(y), {x}, bw);
}

NodePtr upsample2x(NodePtr x) {
  const int N = x->val.n(), C = x->val.c(), H = x->val.h(), W = x->val.w();
  Tensor y(N, C, 2 * H, 2 * W);
  kernels::upsample2x_forward(x->val.data(), y.data(), N, C, H, W);
  Node* xp = x.get();
  auto bw = [=](Node& self) {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    kernels::upsample2x_backward(self.grad.data(), xp->grad.data(), N, C, H, W);
  };
  return make_op(std::move(y), {x}, bw);
}

NodePtr pad_bottom_right(NodePtr x, int H, int W) {
  const int N = x->val.n(), C = x->val.c(), h = x->val.h(), w = x->val.w();
  if (H < h || W < w) throw std::invalid_argument("pad: target smaller than input");
  if (H == h && W == w) return x;
  Tensor y(N, C, H, W);
  for (int nc = 0; nc < N * C; ++nc)
    for (int r = 0; r < h; ++r)
      std::copy_n(x->val.data() + (size_t(nc) * h + r) * w, w,
                  y.data() + (size_t(nc) * H + r) * W);
  Node* xp = x.get();
  auto bw = [=](Node& self) {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    for (int nc = 0; nc < N * C; ++nc)
      for (int r = 0; r < h; ++r) {
        const float* src = self.grad.data() + (size_t(nc) * H + r) * W;
        float* dst = xp->grad.data() + (size_t(nc) * h + r) * w;
        for (int c = 0; c < w; ++c) dst[c] += src[c];
      }
  };
  return make_op(std::move(y), {x}, bw);
}

NodePtr crop_top_left(NodePtr x, int H, int W) {
  const int N = x->val.n(), C = x->val.c(), h = x->val.h(), w = x->val.w();
  if (H > h || W > w) throw std::invalid_argument("crop: target larger than input");
  if (H == h && W == w) return x;
  Tensor y(N, C, H, W);
  for (int nc = 0; nc < N * C; ++nc)
    for (int r = 0; r < H; ++r)
      std::copy_n(x->val.data() + (size_t(nc) * h + r) * w, W,
                  y.data() + (size_t(nc) * H + r) * W);
  Node* xp = x.get();
  auto bw = [=](Node& self) {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    for (int nc = 0; nc < N * C; ++nc)
      for (int r = 0; r < H; ++r) {
        const float* src = self.grad.data() + (size_t(nc) * H + r) * W;
        float* dst = xp->grad.data() + (size_t(nc) * h + r) * w;
        for (int c = 0; c < W; ++c) dst[c] += src[c];
      }
  };
  return make_op(std::move(y), {x}, bw);
}

NodePtr scale_clamp(NodePtr x, float scale, float lo, float hi) {
  Tensor y = x->val;
  for (auto& v : y.v) {
    v *= scale;
    v = v < lo ? lo : (v > hi ? hi : v);
  }
  Node* xp = x.get();
  auto bw2 = [=](Node& self) {
    if (!xp->requires_grad) return;
    xp->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      const float s = xp->val.v[i] * scale;
      if (s > lo && s < hi) xp->grad.v[i] += self.grad.v[i] * scale;
    }
  };
  return make_op(std::move(y), {x}, bw2);
}

// ---- layers ---------------------------------------------------------------

float Init::normal(float stddev) {
  auto next = [this]() {
    s0 += 0x9e3779b97f4a7c15ull;
    uint64_t z = s0;
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  };
  const double u1 = (double(next() >> 11) + 1.0) * 0x1.0p-53;
  const double u2 = double(next() >> 11) * 0x1.0p-53;
  return float(stddev * std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2));
}

void Init::fill_kaiming(Tensor& t, int fan_in) {
  const float stddev = std::sqrt(2.0f / float(fan_in));
  for (auto& v : t.v) v = normal(stddev);
}

Conv2d::Conv2d(int in_c, int out_c, int k, int stride_, int pad_, Init& init)
    : stride(stride_), pad(pad_) {
  Tensor w(out_c, in_c, k, k);
  init.fill_kaiming(w, in_c * k * k);
  weight = make_param(std::move(w));
  bias = make_param(Tensor(out_c, 1, 1, 1));
}

void Conv2d::collect(const std::string& prefix, std::vector<ParamEntry>& out) const {
  out.push_back({prefix + "/W", weight});
  out.push_back({prefix + "/b", bias});
}

BatchNorm2d::BatchNorm2d(int channels)
    : running_mean(channels, 1, 1, 1), running_var(channels, 1, 1, 1) {
  Tensor g(channels, 1, 1, 1);
  for (auto& v : g.v) v = 1.0f;
  gamma = make_param(std::move(g));
  beta = make_param(Tensor(channels, 1, 1, 1));
  for (auto& v : running_var.v) v = 1.0f;
}

NodePtr BatchNorm2d::operator()(NodePtr x, bool training) {
  const int N = x->val.n(), C = x->val.c(), H = x->val.h(), W = x->val.w();
  const size_t plane = size_t(H) * W;
  const size_t per_c = size_t(N) * plane;
  Tensor y(N, C, H, W);

  auto mean = std::make_shared<std::vector<float>>(C);
  auto invstd = std::make_shared<std::vector<float>>(C);
  for (int c = 0; c < C; ++c) {
    double m, var;
    if (training) {
      double acc = 0;
      for (int n = 0; n < N; ++n) {
        const float* src = x->val.data() + (size_t(n) * C + c) * plane;
        for (size_t i = 0; i < plane; ++i) acc += src[i];
      }
      m = acc / double(per_c);
      double acc2 = 0;
      for (int n = 0; n < N; ++n) {
        const float* src = x->val.data() + (size_t(n) * C + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          const double d = src[i] - m;
          acc2 += d * d;
        }
      }
      var = acc2 / double(per_c);
      running_mean.v[c] = (1 - momentum) * running_mean.v[c] + momentum * float(m);
      running_var.v[c] = (1 - momentum) * running_var.v[c] + momentum * float(var);
    } else {
      m = running_mean.v[c];
      var = running_var.v[c];
    }
    (*mean)[c] = float(m);
    (*invstd)[c] = float(1.0 / std::sqrt(var + eps));
  }
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const float* src = x->val.data() + (size_t(n) * C + c) * plane;
      float* dst = y.data() + (size_t(n) * C + c) * plane;
      const float g = gamma->val.v[c], bb = beta->val.v[c];
      const float mc = (*mean)[c], is = (*invstd)[c];
      for (size_t i = 0; i < plane; ++i) dst[i] = g * (src[i] - mc) * is + bb;
    }

  Node* xp = x.get();
  Node* gp = gamma.get();
  Node* bp = beta.get();
  auto bw = [=](Node& self) {
    gp->ensure_grad();
    bp->ensure_grad();
    const bool need_dx = xp->requires_grad;
    if (need_dx) xp->ensure_grad();
    for (int c = 0; c < C; ++c) {
      const float mc = (*mean)[c], is = (*invstd)[c], g = gp->val.v[c];
      double dgamma = 0, dbeta = 0;
      for (int n = 0; n < N; ++n) {
        const float* xv = xp->val.data() + (size_t(n) * C + c) * plane;
        const float* dy = self.grad.data() + (size_t(n) * C + c) * plane;
        for (size_t i = 0; i < plane; ++i) {
          dgamma += double(dy[i]) * (xv[i] - mc) * is;
          dbeta += dy[i];
        }
      }
      gp->grad.v[c] += float(dgamma);
      bp->grad.v[c] += float(dbeta);
      if (!need_dx) continue;
      if (training) {
        const float k1 = g * is / float(per_c);
        for (int n = 0; n < N; ++n) {
          const float* xv = xp->val.data() + (size_t(n) * C + c) * plane;
          const float* dy = self.grad.data() + (size_t(n) * C + c) * plane;
          float* dx = xp->grad.data() + (size_t(n) * C + c) * plane;
          for (size_t i = 0; i < plane; ++i) {
            const float xhat = (xv[i] - mc) * is;
            dx[i] += k1 * (float(per_c) * dy[i] - float(dbeta) - xhat * float(dgamma));
          }
        }
      } else {
        const float k1 = g * is;
        for (int n = 0; n < N; ++n) {
          const float* dy = self.grad.data() + (size_t(n) * C + c) * plane;
          float* dx = xp->grad.data() + (size_t(n) * C + c) * plane;
          for (size_t i = 0; i < plane; ++i) dx[i] += k1 * dy[i];
        }
      }
    }
  };
  return make_op(std::move(y), {x, gamma, beta}, bw);
}

void BatchNorm2d::collect(const std::string& prefix, std::vector<ParamEntry>& params,
                          std::vector<BufferEntry>& buffers) {
  params.push_back({prefix + "/gamma", gamma});
  params.push_back({prefix + "/beta", beta});
  buffers.push_back({prefix + "/running_mean", &running_mean});
  buffers.push_back({prefix + "/running_var", &running_var});
}

}  // namespace rd::nn
