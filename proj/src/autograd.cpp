#include "up2d/autograd.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace up2d {

namespace {

using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

Var make_result(Tensor value, const char* op, std::vector<Var> parents) {
    value.check_finite(op);
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = op;
    node->requires_grad = std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p->requires_grad; });
    node->parents = std::move(parents);
    return node;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         shape_str(t.shape()));
    }
}

struct ConvGeometry {
    std::size_t n, cin, h, w, cout, kh, kw, oh, ow;
    int stride, pad;
    std::size_t k() const { return cin * kh * kw; }
    std::size_t p() const { return oh * ow; }
};

ConvGeometry conv_geometry(const Tensor& x, const Tensor& k, int stride, int pad) {
    require_rank(x, 4, "conv2d input");
    require_rank(k, 4, "conv2d kernel");
    if (stride < 1 || pad < 0) throw ParameterError("conv2d: stride must be >= 1 and padding >= 0");
    ConvGeometry g{};
    g.n = x.dim(0);
    g.cin = x.dim(1);
    g.h = x.dim(2);
    g.w = x.dim(3);
    g.cout = k.dim(0);
    g.kh = k.dim(2);
    g.kw = k.dim(3);
    g.stride = stride;
    g.pad = pad;
    if (k.dim(1) != g.cin) {
        throw ShapeError("conv2d: input has " + std::to_string(g.cin) + " channels but kernel " +
                         shape_str(k.shape()) + " expects " + std::to_string(k.dim(1)));
    }
    const std::size_t ph = g.h + 2 * static_cast<std::size_t>(pad);
    const std::size_t pw = g.w + 2 * static_cast<std::size_t>(pad);
    if (g.kh > ph || g.kw > pw) {
        throw ShapeError("conv2d: kernel " + shape_str(k.shape()) + " larger than padded input " +
                         shape_str(x.shape()));
    }
    g.oh = (ph - g.kh) / static_cast<std::size_t>(stride) + 1;
    g.ow = (pw - g.kw) / static_cast<std::size_t>(stride) + 1;
    return g;
}

// Output columns [lo, hi) whose input coordinate ox * stride - pad + offset falls inside [0, extent).
std::pair<long, long> valid_range(long offset, long stride, long pad, long extent, long outputs) {
    const long first = pad - offset;  // smallest ox * stride that is in range
    long lo = first <= 0 ? 0 : (first + stride - 1) / stride;
    const long last = extent - 1 + pad - offset;
    long hi = last < 0 ? 0 : last / stride + 1;
    lo = std::min(lo, outputs);
    hi = std::clamp(hi, lo, outputs);
    return {lo, hi};
}

// col is [K, P] row-major for a single image.
void im2col(const Scalar* img, const ConvGeometry& g, Scalar* col) {
    const auto stride = static_cast<long>(g.stride);
    const auto pad = static_cast<long>(g.pad);
    const auto w = static_cast<long>(g.w);
    const auto ow = static_cast<long>(g.ow);
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.cin; ++c) {
        const Scalar* plane = img + c * g.h * g.w;
        for (std::size_t i = 0; i < g.kh; ++i) {
            const auto [ylo, yhi] = valid_range(static_cast<long>(i), stride, pad, static_cast<long>(g.h),
                                                static_cast<long>(g.oh));
            for (std::size_t j = 0; j < g.kw; ++j, ++row) {
                const auto [xlo, xhi] = valid_range(static_cast<long>(j), stride, pad, w, ow);
                Scalar* dst = col + row * g.p();
                std::fill(dst, dst + g.p(), 0.0f);
                for (long oy = ylo; oy < yhi; ++oy) {
                    const Scalar* src = plane + (oy * stride - pad + static_cast<long>(i)) * w;
                    Scalar* out = dst + oy * ow;
                    for (long ox = xlo; ox < xhi; ++ox) out[ox] = src[ox * stride - pad + static_cast<long>(j)];
                }
            }
        }
    }
}

void col2im_add(const Scalar* col, const ConvGeometry& g, Scalar* img) {
    const auto stride = static_cast<long>(g.stride);
    const auto pad = static_cast<long>(g.pad);
    const auto w = static_cast<long>(g.w);
    const auto ow = static_cast<long>(g.ow);
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.cin; ++c) {
        Scalar* plane = img + c * g.h * g.w;
        for (std::size_t i = 0; i < g.kh; ++i) {
            const auto [ylo, yhi] = valid_range(static_cast<long>(i), stride, pad, static_cast<long>(g.h),
                                                static_cast<long>(g.oh));
            for (std::size_t j = 0; j < g.kw; ++j, ++row) {
                const auto [xlo, xhi] = valid_range(static_cast<long>(j), stride, pad, w, ow);
                const Scalar* src = col + row * g.p();
                for (long oy = ylo; oy < yhi; ++oy) {
                    Scalar* dst = plane + (oy * stride - pad + static_cast<long>(i)) * w;
                    const Scalar* in = src + oy * ow;
                    for (long ox = xlo; ox < xhi; ++ox) dst[ox * stride - pad + static_cast<long>(j)] += in[ox];
                }
            }
        }
    }
}

double mask_total(const Tensor& mask) {
    double total = 0.0;
    for (Scalar m : mask.data()) total += m;
    return total;
}

} // namespace

Tensor& Node::ensure_grad() {
    if (grad.shape() != value.shape() || grad.numel() != value.numel()) grad = Tensor::zeros(value.shape());
    return grad;
}

Rng derive_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return Rng(seq);
}

Var make_leaf(Tensor value, bool requires_grad) {
    value.check_finite("leaf");
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return node;
}

void backward(const Var& loss) {
    if (loss->value.numel() != 1 || loss->value.rank() != 0) {
        throw ShapeError("backward: loss must be a scalar, got shape " + shape_str(loss->value.shape()));
    }
    if (!loss->requires_grad) return;

    // Iterative post-order DFS gives a topological order; reversed it visits each node once.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.get(), 0}};
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    loss->ensure_grad()[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node& node = **it;
        if (node.backward_fn && node.grad.numel() == node.value.numel()) node.backward_fn(node);
    }
}

void zero_grad(std::span<const Var> params) {
    for (const auto& p : params) p->grad = Tensor();
}

Var conv2d(const Var& input, const Var& kernel, int stride, int padding) {
    const ConvGeometry g = conv_geometry(input->value, kernel->value, stride, padding);
    const std::size_t K = g.k();
    const std::size_t P = g.p();
    Tensor out({g.n, g.cout, g.oh, g.ow});
    // Columns are cached per image only when a backward pass can need them.
    const bool keep = input->requires_grad || kernel->requires_grad;
    auto cols = std::make_shared<std::vector<Scalar>>((keep ? g.n : 1) * K * P);
    ConstMapMat wmat(kernel->value.data().data(), static_cast<long>(g.cout), static_cast<long>(K));
    for (std::size_t n = 0; n < g.n; ++n) {
        Scalar* col = cols->data() + (keep ? n : 0) * K * P;
        im2col(input->value.data().data() + n * g.cin * g.h * g.w, g, col);
        ConstMapMat cmat(col, static_cast<long>(K), static_cast<long>(P));
        MapMat omat(out.data().data() + n * g.cout * P, static_cast<long>(g.cout), static_cast<long>(P));
        omat.noalias() = wmat * cmat;
    }
    auto node = make_result(std::move(out), "conv2d", {input, kernel});
    node->backward_fn = [g, cols](Node& self) {
        const Var& in = self.parents[0];
        const Var& ker = self.parents[1];
        const std::size_t K = g.k();
        const std::size_t P = g.p();
        ConstMapMat wmat(ker->value.data().data(), static_cast<long>(g.cout), static_cast<long>(K));
        std::vector<Scalar> dcol(K * P);
        for (std::size_t n = 0; n < g.n; ++n) {
            ConstMapMat gout(self.grad.data().data() + n * g.cout * P, static_cast<long>(g.cout),
                             static_cast<long>(P));
            ConstMapMat cmat(cols->data() + n * K * P, static_cast<long>(K), static_cast<long>(P));
            if (ker->requires_grad) {
                MapMat gw(ker->ensure_grad().data().data(), static_cast<long>(g.cout), static_cast<long>(K));
                gw.noalias() += gout * cmat.transpose();
            }
            if (in->requires_grad) {
                MapMat dmat(dcol.data(), static_cast<long>(K), static_cast<long>(P));
                dmat.noalias() = wmat.transpose() * gout;
                col2im_add(dcol.data(), g, in->ensure_grad().data().data() + n * g.cin * g.h * g.w);
            }
        }
    };
    return node;
}

Var add_channel_bias(const Var& input, const Var& bias) {
    const Tensor& x = input->value;
    require_rank(x, 4, "add_channel_bias");
    if (bias->value.rank() != 1 || bias->value.dim(0) != x.dim(1)) {
        throw ShapeError("add_channel_bias: bias " + shape_str(bias->value.shape()) + " vs input " +
                         shape_str(x.shape()));
    }
    const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor out = x;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
            const Scalar b = bias->value[c];
            Scalar* p = out.data().data() + (n * C + c) * HW;
            for (std::size_t i = 0; i < HW; ++i) p[i] += b;
        }
    auto node = make_result(std::move(out), "add_channel_bias", {input, bias});
    node->backward_fn = [N, C, HW](Node& self) {
        const Var& in = self.parents[0];
        const Var& b = self.parents[1];
        if (in->requires_grad) {
            auto& g = in->ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
        if (b->requires_grad) {
            auto& g = b->ensure_grad();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c) {
                    const Scalar* p = self.grad.data().data() + (n * C + c) * HW;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < HW; ++i) acc += p[i];
                    g[c] += static_cast<Scalar>(acc);
                }
        }
    };
    return node;
}

Var upsample_nearest2x(const Var& input) {
    const Tensor& x = input->value;
    require_rank(x, 4, "upsample_nearest2x");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor out({N, C, 2 * H, 2 * W});
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const Scalar* src = x.data().data() + nc * H * W;
        Scalar* dst = out.data().data() + nc * 4 * H * W;
        for (std::size_t y = 0; y < 2 * H; ++y)
            for (std::size_t xx = 0; xx < 2 * W; ++xx) dst[y * 2 * W + xx] = src[(y / 2) * W + xx / 2];
    }
    auto node = make_result(std::move(out), "upsample_nearest2x", {input});
    node->backward_fn = [N, C, H, W](Node& self) {
        const Var& in = self.parents[0];
        if (!in->requires_grad) return;
        auto& g = in->ensure_grad();
        for (std::size_t nc = 0; nc < N * C; ++nc) {
            const Scalar* src = self.grad.data().data() + nc * 4 * H * W;
            Scalar* dst = g.data().data() + nc * H * W;
            for (std::size_t y = 0; y < 2 * H; ++y)
                for (std::size_t xx = 0; xx < 2 * W; ++xx) dst[(y / 2) * W + xx / 2] += src[y * 2 * W + xx];
        }
    };
    return node;
}

Var concat_channels(const Var& a, const Var& b) {
    const Tensor& x = a->value;
    const Tensor& y = b->value;
    require_rank(x, 4, "concat_channels");
    require_rank(y, 4, "concat_channels");
    if (x.dim(0) != y.dim(0) || x.dim(2) != y.dim(2) || x.dim(3) != y.dim(3)) {
        throw ShapeError("concat_channels: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
    }
    const std::size_t N = x.dim(0), Ca = x.dim(1), Cb = y.dim(1), HW = x.dim(2) * x.dim(3);
    Tensor out({N, Ca + Cb, x.dim(2), x.dim(3)});
    for (std::size_t n = 0; n < N; ++n) {
        std::copy_n(x.data().data() + n * Ca * HW, Ca * HW, out.data().data() + n * (Ca + Cb) * HW);
        std::copy_n(y.data().data() + n * Cb * HW, Cb * HW, out.data().data() + (n * (Ca + Cb) + Ca) * HW);
    }
    auto node = make_result(std::move(out), "concat_channels", {a, b});
    node->backward_fn = [N, Ca, Cb, HW](Node& self) {
        const Var& pa = self.parents[0];
        const Var& pb = self.parents[1];
        for (std::size_t n = 0; n < N; ++n) {
            const Scalar* g = self.grad.data().data() + n * (Ca + Cb) * HW;
            if (pa->requires_grad) {
                Scalar* d = pa->ensure_grad().data().data() + n * Ca * HW;
                for (std::size_t i = 0; i < Ca * HW; ++i) d[i] += g[i];
            }
            if (pb->requires_grad) {
                Scalar* d = pb->ensure_grad().data().data() + n * Cb * HW;
                for (std::size_t i = 0; i < Cb * HW; ++i) d[i] += g[Ca * HW + i];
            }
        }
    };
    return node;
}

Var relu(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data()) v = v > 0.0f ? v : 0.0f;
    auto node = make_result(std::move(out), "relu", {x});
    node->backward_fn = [](Node& self) {
        const Var& in = self.parents[0];
        if (!in->requires_grad) return;
        auto& g = in->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (in->value[i] > 0.0f) g[i] += self.grad[i];
    };
    return node;
}

Var sigmoid(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.data()) {
        // Stable in both tails.
        v = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v)) : std::exp(v) / (1.0f + std::exp(v));
        v = clamp_prob(v);
    }
    auto node = make_result(std::move(out), "sigmoid", {x});
    node->backward_fn = [](Node& self) {
        const Var& in = self.parents[0];
        if (!in->requires_grad) return;
        auto& g = in->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const Scalar s = self.value[i];
            g[i] += self.grad[i] * s * (1.0f - s);
        }
    };
    return node;
}

Var dropout(const Var& x, Scalar rate, bool stochastic, Rng& rng) {
    if (!(rate >= 0.0f && rate < 1.0f)) throw ParameterError("dropout: rate must lie in [0, 1)");
    if (!stochastic || rate == 0.0f) return x;
    const Scalar keep_scale = 1.0f / (1.0f - rate);
    auto keep = std::make_shared<std::vector<Scalar>>(x->value.numel());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Tensor out = x->value;
    for (std::size_t i = 0; i < out.numel(); ++i) {
        (*keep)[i] = unif(rng) >= rate ? keep_scale : 0.0f;
        out[i] *= (*keep)[i];
    }
    auto node = make_result(std::move(out), "dropout", {x});
    node->backward_fn = [keep](Node& self) {
        const Var& in = self.parents[0];
        if (!in->requires_grad) return;
        auto& g = in->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * (*keep)[i];
    };
    return node;
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    auto node = make_result(std::move(out), "add", {a, b});
    node->backward_fn = [](Node& self) {
        for (const Var& p : self.parents) {
            if (!p->requires_grad) continue;
            auto& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i];
        }
    };
    return node;
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    auto node = make_result(std::move(out), "mul", {a, b});
    node->backward_fn = [](Node& self) {
        const Var& pa = self.parents[0];
        const Var& pb = self.parents[1];
        if (pa->requires_grad) {
            auto& g = pa->ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            auto& g = pb->ensure_grad();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * pa->value[i];
        }
    };
    return node;
}

Var scale(const Var& x, Scalar factor) {
    Tensor out = x->value;
    for (auto& v : out.data()) v *= factor;
    auto node = make_result(std::move(out), "scale", {x});
    node->backward_fn = [factor](Node& self) {
        const Var& in = self.parents[0];
        if (!in->requires_grad) return;
        auto& g = in->ensure_grad();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += self.grad[i] * factor;
    };
    return node;
}

Var sum(const Var& x) {
    auto node = make_result(Tensor::scalar(x->value.sum()), "sum", {x});
    node->backward_fn = [](Node& self) {
        const Var& in = self.parents[0];
        if (!in->requires_grad) return;
        auto& g = in->ensure_grad();
        const Scalar up = self.grad[0];
        for (auto& v : g.data()) v += up;
    };
    return node;
}

Var mean(const Var& x) {
    if (x->value.numel() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(x), 1.0f / static_cast<Scalar>(x->value.numel()));
}

Scalar clamp_prob(Scalar p) { return std::clamp(p, kProbEps, 1.0f - kProbEps); }

Var bce_with_logits(const Var& logits, const Tensor& target) {
    require_same_shape(logits->value, target, "bce_with_logits");
    const std::size_t n = target.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = logits->value[i];
        const double y = target[i];
        acc += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
    }
    auto node = make_result(Tensor::scalar(static_cast<Scalar>(acc / static_cast<double>(n))), "bce_with_logits",
                            {logits});
    node->backward_fn = [target, n](Node& self) {
        const Var& in = self.parents[0];
        if (!in->requires_grad) return;
        auto& g = in->ensure_grad();
        const Scalar up = self.grad[0] / static_cast<Scalar>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Scalar z = in->value[i];
            const Scalar s = z >= 0.0f ? 1.0f / (1.0f + std::exp(-z)) : std::exp(z) / (1.0f + std::exp(z));
            g[i] += up * (s - target[i]);
        }
    };
    return node;
}

Var masked_bce(const Var& probs, const Tensor& target, const Tensor& mask) {
    require_same_shape(probs->value, target, "masked_bce target");
    require_same_shape(probs->value, mask, "masked_bce mask");
    const double total = mask_total(mask);
    if (total <= 0.0) return make_result(Tensor::scalar(0.0f), "masked_bce", {});
    double acc = 0.0;
    for (std::size_t i = 0; i < mask.numel(); ++i) {
        if (mask[i] == 0.0f) continue;
        const double p = clamp_prob(probs->value[i]);
        const double y = target[i];
        acc -= mask[i] * (y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    }
    auto node = make_result(Tensor::scalar(static_cast<Scalar>(acc / total)), "masked_bce", {probs});
    node->backward_fn = [target, mask, total](Node& self) {
        const Var& in = self.parents[0];
        if (!in->requires_grad) return;
        auto& g = in->ensure_grad();
        const double up = self.grad[0] / total;
        for (std::size_t i = 0; i < mask.numel(); ++i) {
            if (mask[i] == 0.0f) continue;
            const Scalar raw = in->value[i];
            if (raw < kProbEps || raw > 1.0f - kProbEps) continue;
            const double p = raw;
            const double y = target[i];
            g[i] += static_cast<Scalar>(up * mask[i] * (-(y / p) + (1.0 - y) / (1.0 - p)));
        }
    };
    return node;
}

Var masked_entropy(const Var& probs, const Tensor& mask) {
    require_same_shape(probs->value, mask, "masked_entropy mask");
    const double total = mask_total(mask);
    if (total <= 0.0) return make_result(Tensor::scalar(0.0f), "masked_entropy", {});
    double acc = 0.0;
    for (std::size_t i = 0; i < mask.numel(); ++i) {
        if (mask[i] == 0.0f) continue;
        const double p = clamp_prob(probs->value[i]);
        acc -= mask[i] * p * std::log(p);
    }
    auto node = make_result(Tensor::scalar(static_cast<Scalar>(acc / total)), "masked_entropy", {probs});
    node->backward_fn = [mask, total](Node& self) {
        const Var& in = self.parents[0];
        if (!in->requires_grad) return;
        auto& g = in->ensure_grad();
        const double up = self.grad[0] / total;
        for (std::size_t i = 0; i < mask.numel(); ++i) {
            if (mask[i] == 0.0f) continue;
            const Scalar raw = in->value[i];
            if (raw < kProbEps || raw > 1.0f - kProbEps) continue;
            g[i] += static_cast<Scalar>(-up * mask[i] * (std::log(static_cast<double>(raw)) + 1.0));
        }
    };
    return node;
}

Tensor upsample_bilinear(const Tensor& input, std::size_t out_h, std::size_t out_w) {
    require_rank(input, 4, "upsample_bilinear");
    const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    if (H == out_h && W == out_w) return input;
    if (out_h == 0 || out_w == 0) throw ShapeError("upsample_bilinear: empty output size");
    Tensor out({N, C, out_h, out_w});
    // Half-pixel centers (align_corners = false).
    const double sy = static_cast<double>(H) / static_cast<double>(out_h);
    const double sx = static_cast<double>(W) / static_cast<double>(out_w);
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const Scalar* src = input.data().data() + nc * H * W;
        Scalar* dst = out.data().data() + nc * out_h * out_w;
        for (std::size_t y = 0; y < out_h; ++y) {
            const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(H - 1));
            const auto y0 = static_cast<std::size_t>(fy);
            const std::size_t y1 = std::min(y0 + 1, H - 1);
            const double wy = fy - static_cast<double>(y0);
            for (std::size_t x = 0; x < out_w; ++x) {
                const double fx =
                    std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(W - 1));
                const auto x0 = static_cast<std::size_t>(fx);
                const std::size_t x1 = std::min(x0 + 1, W - 1);
                const double wx = fx - static_cast<double>(x0);
                const double top = src[y0 * W + x0] * (1.0 - wx) + src[y0 * W + x1] * wx;
                const double bot = src[y1 * W + x0] * (1.0 - wx) + src[y1 * W + x1] * wx;
                dst[y * out_w + x] = static_cast<Scalar>(top * (1.0 - wy) + bot * wy);
            }
        }
    }
    return out;
}

} // namespace up2d
