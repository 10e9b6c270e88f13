// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,...] [--json results.json]
//
// Criteria 1-6 are oracle and property checks; 7-9 adapt a trained source model on the default
// synthetic shift over three seeds; 10 audits every adaptation run made by the suite.
// The exit status is nonzero only when the suite itself cannot run; a failed criterion is
// reported on its line and in the JSON results.

#include "oracles.hpp"

#include "up2d/log.hpp"
#include "up2d/pipeline.hpp"
#include "up2d/quantile_entropy.hpp"
#include "up2d/rpf.hpp"
#include "up2d/ugema.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string_view>
#include <sstream>

using namespace up2d;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool passed = false;
    std::string detail;
};

struct Result {
    int id;
    std::string name;
    Outcome outcome;
    double seconds = 0.0;
    double limit_seconds = 0.0;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------------------------
// 1. RPF masks against the brute-force transcription, exhaustive over 4x4 cup masks.

Outcome rpf_oracle() {
    constexpr std::size_t S = 4, HW = S * S, F = 3;
    const float grid[] = {-1.0f, 0.0f, 0.5f, 2.0f};
    const float prob_grid[] = {0.3f, 0.6f, 0.8f, 0.95f};
    // Outer (disc) patterns combined with every cup mask: empty, full, a centered block, a ring.
    const std::uint32_t outer_patterns[] = {0x0000u, 0xFFFFu, 0x0660u, 0xF99Fu};
    std::size_t cases = 0, mask_mismatch = 0, e2e_compared = 0, e2e_ties = 0, e2e_mismatch = 0, proto_mismatch = 0;
    std::mt19937_64 rng(1234);

    for (std::uint32_t cup = 0; cup < (1u << HW); ++cup) {
        const std::uint32_t outer_bits = outer_patterns[cup % 4] | (cup % 8 < 4 ? cup : 0u);
        Tensor small({1, 1, S, S}), outer({1, 1, S, S}), probs({1, 1, S, S}), features({1, F, S, S});
        std::vector<std::vector<double>> f(HW, std::vector<double>(F));
        std::vector<double> p(HW);
        std::vector<int> y(HW), keep(HW, 1);
        for (std::size_t v = 0; v < HW; ++v) {
            small[v] = static_cast<float>((cup >> v) & 1u);
            outer[v] = static_cast<float>((outer_bits >> v) & 1u);
            y[v] = static_cast<int>(small[v]);
            const std::uint64_t r = rng();
            probs[v] = y[v] ? prob_grid[r % 4] : 1.0f - prob_grid[r % 4];
            p[v] = probs[v];
            for (std::size_t d = 0; d < F; ++d) {
                features[d * HW + v] = grid[(r >> (8 + 2 * d)) % 4];
                f[v][d] = features[d * HW + v];
            }
        }
        const auto c0 = oracle::prototype(f, p, y, 0, keep);
        const auto c1 = oracle::prototype(f, p, y, 1, keep);
        if (c0.empty() || c1.empty()) continue;  // a single-class mask has no prototype pair
        ++cases;

        // (a) The mask functions on identical distance inputs.
        Tensor d({1, 2, S, S});
        for (std::size_t v = 0; v < HW; ++v) {
            d[v] = static_cast<float>(oracle::l2(f[v], c0));
            d[HW + v] = static_cast<float>(oracle::l2(f[v], c1));
        }
        const Tensor ms = denoise_mask_standard(small, d);
        const Tensor mr = denoise_mask_refined(small, outer, d);
        for (std::size_t v = 0; v < HW; ++v) {
            const double d0 = d[v], d1 = d[HW + v];
            mask_mismatch += ms[v] != static_cast<float>(oracle::standard_mask(y[v], d0, d1));
            mask_mismatch += mr[v] != static_cast<float>(oracle::refined_mask(y[v], static_cast<int>(outer[v]), d0, d1));
        }

        // (b) The library's own prototypes and distances feeding the masks.
        const auto protos = compute_prototypes(features, probs, small);
        for (std::size_t k = 0; k < F; ++k)
            proto_mismatch += std::abs(protos.background.center[k] - c0[k]) > 1e-5 ||
                              std::abs(protos.foreground.center[k] - c1[k]) > 1e-5;
        const auto dl = distance_map(features, protos);
        const Tensor ls = denoise_mask_standard(small, *dl), lr = denoise_mask_refined(small, outer, *dl);
        for (std::size_t v = 0; v < HW; ++v) {
            const double d0 = oracle::l2(f[v], c0), d1 = oracle::l2(f[v], c1);
            if (std::abs(d1 - d0) < 1e-5) {
                ++e2e_ties;
                continue;
            }
            ++e2e_compared;
            e2e_mismatch += ls[v] != static_cast<float>(oracle::standard_mask(y[v], d0, d1));
            e2e_mismatch += lr[v] != static_cast<float>(oracle::refined_mask(y[v], static_cast<int>(outer[v]), d0, d1));
        }
    }
    const bool ok = cases >= 10000 && mask_mismatch == 0 && e2e_mismatch == 0 && proto_mismatch == 0;
    return {ok, fmt("%zu cases x 16 px: %zu mask mismatches; library prototypes+distances: %zu prototype "
                    "mismatches, %zu mismatches over %zu px (%zu exact/near ties excluded)",
                    cases, mask_mismatch, proto_mismatch, e2e_mismatch, e2e_compared, e2e_ties)};
}

// ---------------------------------------------------------------------------------------------
// 2. Algorithm 1 state machine against the line-by-line reference.

Outcome ugema_oracle() {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t mismatches = 0, steps = 0, updates = 0;
    for (int t = 0; t < 1000; ++t) {
        const int batches = 2 + static_cast<int>(unit(rng) * 10);
        const double trend = unit(rng) * 0.05;
        const double noise = 0.02 + unit(rng) * 0.3;
        UgemaState state;
        std::vector<Scalar> teacher{0.5f, -0.5f, 1.0f};
        oracle::Algorithm1 ref{0.95, {0.5, -0.5, 1.0}, std::numeric_limits<double>::infinity(),
                               std::numeric_limits<double>::infinity(), {}, 0};
        for (int epoch = 0; epoch < 20; ++epoch) {
            ref.begin_epoch();
            for (int b = 0; b < batches; ++b, ++steps) {
                const double e = std::max(0.0, 0.5 - trend * epoch + noise * (unit(rng) - 0.5));
                const std::vector<Scalar> student{static_cast<Scalar>(unit(rng)), static_cast<Scalar>(unit(rng)),
                                                  static_cast<Scalar>(unit(rng))};
                const bool got = ugema_step(state, e, teacher, student, 0.95);
                const bool want = ref.step(e, {student[0], student[1], student[2]});
                mismatches += got != want;
                mismatches += state.min_batch_uncertainty != ref.E_min_b;
                for (std::size_t i = 0; i < teacher.size(); ++i) mismatches += std::abs(teacher[i] - ref.theta_t[i]) > 1e-5;
            }
            ugema_epoch_end(state);
            ref.end_epoch();
            mismatches += state.min_epoch_uncertainty != ref.E_min_e;
            mismatches += state.min_batch_uncertainty != ref.E_min_e;
        }
        mismatches += state.update_count != ref.updates;
        updates += state.update_count;
    }
    return {mismatches == 0, fmt("1000 trajectories x 20 epochs (%zu batches, %zu gated updates): %zu mismatches",
                                 steps, updates, mismatches)};
}

// ---------------------------------------------------------------------------------------------
// 3. Central finite differences on every parameter tensor of the network.
//
// The network is float32, so the loss values used for the differences are recomputed in double from
// the probabilities (the library returns them rounded to float). ReLU makes the losses piecewise
// smooth: a difference is only taken over a step whose +h and -h evaluations keep every ReLU input
// on the same side of zero as the base point, so the difference measures the derivative the
// backward pass claims to compute rather than a kink.

double clamp01(double p) { return std::clamp(p, 1e-7, 1.0 - 1e-7); }

double bce_oracle(const Tensor& p, const Tensor& y, const Tensor& m) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        if (m[i] == 0.0f) continue;
        const double q = clamp01(p[i]);
        num -= m[i] * (y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q));
        den += m[i];
    }
    return den > 0.0 ? num / den : 0.0;
}

double entropy_oracle(const Tensor& p, const Tensor& m) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i) {
        if (m[i] == 0.0f) continue;
        const double q = clamp01(p[i]);
        num -= m[i] * q * std::log(q);
        den += m[i];
    }
    return den > 0.0 ? num / den : 0.0;
}

// Signs of every ReLU input on the tape that produced `root`, in a fixed traversal order.
std::vector<bool> relu_pattern(const Var& root) {
    std::vector<bool> bits;
    std::vector<const Node*> stack{root.get()};
    std::set<const Node*> seen;
    while (!stack.empty()) {
        const Node* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        if (std::string_view(n->op) == "relu")
            for (Scalar x : n->parents[0]->value.data()) bits.push_back(x > 0.0f);
        for (const auto& q : n->parents) stack.push_back(q.get());
    }
    return bits;
}

Outcome gradient_check() {
    const LogLevel previous = log_level();
    set_log_level(LogLevel::Silent);  // empty-region fallbacks are expected on untrained networks
    const double ladder[] = {1e-2, 5e-3, 2e-3, 1e-3, 5e-4, 2e-4, 1e-4, 5e-5, 2e-5, 1e-5};
    const char* loss_names[] = {"L_cons", "L_ent", "L_SFDA"};
    double worst = 0.0;
    std::string worst_where;
    std::size_t checks = 0, failures = 0, zero_grad_checks = 0, kink_bound = 0;
    std::vector<std::size_t> step_used(std::size(ladder), 0);

    for (std::uint64_t config = 0; config < 50; ++config) {
        std::mt19937_64 rng(1000 + config);
        const SegNet net({}, 500 + config);
        // Randomize every parameter, biases included, so that no ReLU input sits exactly at zero.
        {
            std::normal_distribution<double> jitter(0.0, 0.05);
            for (const Var& w : net.parameters())
                for (auto& x : w->value.data()) x += static_cast<Scalar>(jitter(rng));
        }
        const SegNet teacher({}, 900 + config);
        const auto samples = generate_samples(2, SceneDistribution{.image_size = 16}, DomainStyle::default_target(),
                                              700 + config);
        const Tensor images = stack_images({&samples[0].image(), &samples[1].image()});
        Rng mc(config);
        const auto t = mc_forward(teacher, images, 3, 0.5f, mc);
        const Tensor mask = build_denoise_masks(t, RpfConfig{}).mask;
        const std::uint64_t dropout_seed = rng();
        auto forward = [&] {
            Rng r(dropout_seed);
            return net.forward(images, true, r, true).probs;
        };
        const Tensor band = quantile_mask(forward()->value, 0.1).mask;
        auto oracle_loss = [&](std::size_t l, const Tensor& p) {
            const double c = bce_oracle(p, t.pseudo_labels, mask), e = entropy_oracle(p, band);
            return l == 0 ? c : l == 1 ? e : c + e;
        };
        auto library_loss = [&](std::size_t l, const Var& p) {
            if (l == 0) return consistency_loss(p, t.pseudo_labels, mask);
            if (l == 1) return entropy_loss(p, band);
            return total_loss(consistency_loss(p, t.pseudo_labels, mask), entropy_loss(p, band));
        };

        const auto params = net.parameters();
        for (std::size_t l = 0; l < 3; ++l) {
            zero_grad(params);
            const Var base_probs = forward();
            const auto base_pattern = relu_pattern(base_probs);
            const double base_loss = oracle_loss(l, base_probs->value);
            backward(library_loss(l, base_probs));
            for (std::size_t k = 0; k < params.size(); ++k) {
                const Var& w = params[k];
                const Tensor g = w->grad;
                const Tensor orig = w->value;
                // Derivative along `dir` from the largest kink-free stencil of the ladder: the central
                // difference when both sides are smooth, otherwise the second-order one-sided difference
                // on the side without a kink. Analytic and numeric values are both taken along the
                // perturbation actually representable in float.
                auto record = [&](const std::vector<double>& dir, const char* what) {
                    ++checks;
                    for (std::size_t s = 0; s < std::size(ladder); ++s) {
                        const double h = ladder[s];
                        std::map<int, std::pair<bool, double>> cache;  // multiple of h -> (smooth, loss)
                        auto at = [&](int m) {
                            auto it = cache.find(m);
                            if (it != cache.end()) return it->second;
                            for (std::size_t i = 0; i < dir.size(); ++i)
                                w->value[i] = static_cast<Scalar>(orig[i] + m * h * dir[i]);
                            const Var p = forward();
                            const std::pair<bool, double> r{relu_pattern(p) == base_pattern, oracle_loss(l, p->value)};
                            w->value = orig;
                            return cache[m] = r;
                        };
                        auto shift = [&](int m, std::size_t i) {
                            return static_cast<double>(static_cast<Scalar>(orig[i] + m * h * dir[i])) - orig[i];
                        };
                        // stencil: multiples of h and their weights; derivative = sum w_j L(m_j) / h.
                        std::vector<std::pair<int, double>> stencil;
                        if (at(1).first && at(-1).first) {
                            stencil = {{1, 0.5}, {-1, -0.5}};
                        } else if (at(-1).first && at(-2).first) {
                            stencil = {{0, 1.5}, {-1, -2.0}, {-2, 0.5}};
                        } else if (at(1).first && at(2).first) {
                            stencil = {{0, -1.5}, {1, 2.0}, {2, -0.5}};
                        } else {
                            continue;
                        }
                        ++step_used[s];
                        double numeric = 0.0, analytic = 0.0;
                        for (const auto& [m, weight] : stencil) {
                            numeric += weight * (m == 0 ? base_loss : at(m).second);
                            if (m == 0) continue;
                            double moved = 0.0;
                            for (std::size_t i = 0; i < dir.size(); ++i) moved += g[i] * shift(m, i);
                            analytic += weight * moved;
                        }
                        const double scale = std::max(std::abs(analytic), std::abs(numeric));
                        if (scale == 0.0) return;  // both vanish
                        const double rel = std::abs(analytic - numeric) / scale;
                        if (rel >= 1e-2) ++failures;
                        if (rel > worst) {
                            worst = rel;
                            worst_where = fmt("config %llu, %s, parameter tensor %zu, %s, step %g",
                                              static_cast<unsigned long long>(config), loss_names[l], k, what, h);
                        }
                        return;
                    }
                    ++kink_bound;
                    ++failures;
                };

                double gnorm = 0.0;
                std::size_t top = 0;
                for (std::size_t i = 0; i < g.numel(); ++i) {
                    gnorm += static_cast<double>(g[i]) * g[i];
                    if (std::abs(g[i]) > std::abs(g[top])) top = i;
                }
                gnorm = std::sqrt(gnorm);
                std::normal_distribution<double> normal(0.0, 1.0);
                std::vector<double> dir(g.numel());
                double dnorm = 0.0;
                for (std::size_t i = 0; i < dir.size(); ++i) {
                    // Gradient direction mixed with a random one, so that both the magnitude and the
                    // orientation of the analytic gradient are tested.
                    dir[i] = (gnorm > 0.0 ? g[i] / gnorm : 0.0) + 0.5 * normal(rng) / std::sqrt(double(dir.size()));
                    dnorm += dir[i] * dir[i];
                }
                for (auto& x : dir) x /= std::sqrt(dnorm);
                if (gnorm == 0.0) ++zero_grad_checks;
                record(dir, "tensor direction");
                // The single element with the largest gradient.
                std::vector<double> unit(g.numel(), 0.0);
                unit[top] = 1.0;
                record(unit, "largest element");
            }
        }
    }
    set_log_level(previous);
    std::string steps;
    for (std::size_t s = 0; s < std::size(ladder); ++s) steps += fmt(" %g:%zu", ladder[s], step_used[s]);
    return {failures == 0,
            fmt("%zu checks (50 configs x 3 losses x every parameter tensor, tensor direction + largest element; "
                "%zu with zero analytic gradient): %zu with relative error >= 1e-2, %zu without a kink-free step; "
                "worst %.2e (%s); steps used:%s",
                checks, zero_grad_checks, failures, kink_bound, worst, worst_where.c_str(), steps.c_str())};
}

// ---------------------------------------------------------------------------------------------
// 4. Quantiles and monotone retention.

Outcome quantile_checks() {
    const LogLevel previous = log_level();
    set_log_level(LogLevel::Silent);  // constant tensors are part of the sample and warn by design
    std::mt19937_64 rng(4242);
    std::uniform_int_distribution<std::size_t> size(1, 4096);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    std::size_t mismatches = 0, violations = 0;
    for (int t = 0; t < 1000; ++t) {
        std::vector<Scalar> v(size(rng));
        for (auto& x : v) x = t % 4 == 0 ? std::round(unit(rng) * 8.0f) / 8.0f : unit(rng);
        for (double beta : {0.0, 0.05, 0.1, 0.5, 0.9, 1.0, static_cast<double>(unit(rng))})
            mismatches += quantile(v, beta) != oracle::quantile(v, beta);
    }
    for (int t = 0; t < 200; ++t) {
        Tensor p({4, 2, 16, 16});
        const float power = 0.3f + 3.0f * unit(rng);
        for (auto& x : p.data()) x = std::pow(unit(rng), power);
        if (t % 5 == 0)
            for (auto& x : p.data()) x = std::round(x * 10.0f) / 10.0f;
        std::vector<double> prev{2.0, 2.0};
        for (int k = 0; k <= 9; ++k) {
            const auto band = quantile_mask(p, 0.05 * k);
            for (std::size_t c = 0; c < 2; ++c) {
                violations += band.retained[c] > prev[c];
                prev[c] = band.retained[c];
            }
        }
    }
    set_log_level(previous);
    return {mismatches == 0 && violations == 0,
            fmt("7000 quantile queries on 1000 tensors: %zu mismatches; retention over beta 0..0.45 on 200 batches: %zu "
                "increases",
                mismatches, violations)};
}

// ---------------------------------------------------------------------------------------------
// 5. Inverted-Gaussian analytics and the foreground guarantee of the region mask.

Outcome gaussian_checks() {
    double worst_center = 0.0, worst_sigma = 0.0;
    std::size_t dropped_fg = 0, masks = 0;
    // Odd-sized symmetric shapes put the centroid on a pixel; s = k / W makes sigma_x = k pixels.
    for (std::size_t half = 2; half <= 12; ++half) {
        const std::size_t W = 2 * half + 1, H = 64;
        for (std::size_t k = 1; k <= half; ++k) {
            Tensor m({H, H});
            for (std::size_t y = 32 - half / 2; y <= 32 + half / 2; ++y)
                for (std::size_t x = 32 - half; x <= 32 + half; ++x) m[y * H + x] = 1.0f;
            const auto g = inverted_gaussian(m, static_cast<double>(k) / static_cast<double>(W));
            worst_center = std::max(worst_center, static_cast<double>(g->map[32 * H + 32]));
            const double at_sigma = 1.0 - std::exp(-0.5);
            worst_sigma = std::max(worst_sigma, std::abs(g->map[32 * H + 32 + k] - at_sigma));
            worst_sigma = std::max(worst_sigma, std::abs(g->map[32 * H + 32 - k] - at_sigma));
        }
    }
    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int t = 0; t < 500; ++t) {
        const std::size_t H = 16 + static_cast<std::size_t>(unit(rng) * 48);
        Tensor m({H, H});
        const double cy = unit(rng) * H, cx = unit(rng) * H, ry = 0.5 + unit(rng) * H / 3, rx = 0.5 + unit(rng) * H / 3;
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < H; ++x)
                if (std::pow((y - cy) / ry, 2) + std::pow((x - cx) / rx, 2) <= 1.0 || unit(rng) < 0.002) m[y * H + x] = 1;
        const auto g = inverted_gaussian(m, 0.05 + unit(rng) * 0.5);
        if (!g) continue;
        for (double delta : {0.0, g->fg_ratio, unit(rng), 1.0}) {
            const auto r = region_mask(m, g->map, delta);
            ++masks;
            for (std::size_t i = 0; i < m.numel(); ++i) dropped_fg += m[i] == 1.0f && r.keep[i] != 1.0f;
        }
    }
    const bool ok = worst_center <= 0.02 && worst_sigma <= 1e-3 && dropped_fg == 0;
    return {ok, fmt("centroid weight max %.2e (<= 0.02); one-sigma error max %.2e (<= 1e-3); %zu region masks drop "
                    "%zu foreground pixels",
                    worst_center, worst_sigma, masks, dropped_fg)};
}

// ---------------------------------------------------------------------------------------------
// 6. Dice and ASSD against brute force.

Tensor random_blob(std::mt19937_64& rng, std::size_t h, std::size_t w) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Tensor m({h, w});
    const int parts = 1 + static_cast<int>(unit(rng) * 3);
    for (int k = 0; k < parts; ++k) {
        const double cy = unit(rng) * h, cx = unit(rng) * w, ry = 1 + unit(rng) * h / 4.0, rx = 1 + unit(rng) * w / 4.0;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                if (std::pow((y - cy) / ry, 2) + std::pow((x - cx) / rx, 2) <= 1.0) m[y * w + x] = 1.0f;
    }
    return m;
}

Outcome metric_checks() {
    std::mt19937_64 rng(606);
    std::uniform_int_distribution<std::size_t> side(8, 64);
    std::size_t dice_mismatch = 0, assd_mismatch = 0;
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t h = side(rng), w = side(rng);
        const Tensor a = random_blob(rng, h, w), b = random_blob(rng, h, w);
        dice_mismatch += std::abs(dice(a, b) - oracle::dice(a, b)) > 1e-12;
        const auto got = assd(a, b);
        const double want = oracle::assd(a, b);
        if (want < 0.0) {
            assd_mismatch += got.has_value();
        } else if (!got) {
            ++assd_mismatch;
        } else {
            worst = std::max(worst, std::abs(*got - want));
            assd_mismatch += std::abs(*got - want) > 1e-6;
        }
    }
    Tensor blob = random_blob(rng, 32, 32);
    blob[16 * 32 + 16] = 1.0f;
    Tensor p({16, 16}), q({16, 16});
    p[2 * 16 + 2] = 1.0f;
    q[5 * 16 + 6] = 1.0f;
    const bool analytic = dice(blob, blob) == 1.0 && *assd(blob, blob) == 0.0 && *assd(p, q) == 5.0;
    return {dice_mismatch == 0 && assd_mismatch == 0 && analytic,
            fmt("200 blob pairs: %zu Dice and %zu ASSD mismatches (max ASSD error %.1e); identical -> Dice 1 / ASSD 0 "
                "and 3-4-5 offset -> ASSD 5: %s",
                dice_mismatch, assd_mismatch, worst, analytic ? "exact" : "WRONG")};
}

// ---------------------------------------------------------------------------------------------
// 7-10. Adaptation on the default synthetic shift.

struct RunRecord {
    std::vector<double> epoch_dice;  // target_test mean Dice of the student after every epoch
    double final_mean = 0, final_disc = 0, final_cup = 0;
    std::size_t updates = 0, gt_reads = 0;
};

struct SeedContext {
    std::uint64_t seed;
    RunConfig cfg;
    DataBundle data;
    Checkpoint source;
    double source_val_cup = 0, source_val_mean = 0;
    double source_only_mean = 0, source_only_cup = 0;
    std::map<std::string, RunRecord> runs;
};

struct Experiment {
    std::vector<SeedContext> seeds;
    std::size_t adaptation_runs = 0, audit_failures = 0, total_gt_reads = 0;
    std::vector<std::string> log;

    RunRecord& run(SeedContext& s, const std::string& key, const RunConfig& cfg) {
        auto it = s.runs.find(key);
        if (it != s.runs.end()) return it->second;
        const auto t0 = Clock::now();
        RunRecord r;
        // Incidents (empty-region fallbacks, empty quantile bands) are counted rather than printed.
        const LogLevel previous = log_level();
        const std::size_t warnings_before = warning_count();
        set_log_level(LogLevel::Silent);
        try {
            const auto result = adapt(s.source, strip_labels(s.data.target), cfg,
                                      evaluation_hook(s.data.target_test, cfg.eval_threshold));
            for (const auto& e : result.epochs) r.epoch_dice.push_back(e.evaluation["mean_dice"].get<double>());
            const auto fin = evaluate(result.student.instantiate(), s.data.target_test, cfg.eval_threshold);
            r.final_mean = fin.mean_dice();
            r.final_disc = fin.classes[0].dice_mean;
            r.final_cup = fin.classes[1].dice_mean;
            r.updates = result.update_count;
            r.gt_reads = result.ground_truth_reads;
            total_gt_reads += r.gt_reads;
            audit_failures += r.gt_reads != 0;
        } catch (const std::logic_error& e) {
            ++audit_failures;  // adapt() refuses to return when the adaptation path read ground truth
            log.push_back(std::string("audit violation: ") + e.what());
        }
        set_log_level(previous);
        ++adaptation_runs;
        const std::string line =
            fmt("  seed %llu %-16s final mean %.2f (disc %.2f, cup %.2f) teacher updates %zu, warnings %zu  %.0fs",
                static_cast<unsigned long long>(s.seed), key.c_str(), r.final_mean, r.final_disc, r.final_cup, r.updates,
                warning_count() - warnings_before, elapsed(t0));
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        log.push_back(line);
        return s.runs[key] = r;
    }
};

Experiment& experiment() {
    static Experiment e = [] {
        Experiment x;
        for (std::uint64_t seed : {1, 2, 3}) {
            const auto t0 = Clock::now();
            SeedContext s;
            s.seed = seed;
            s.cfg.seed = seed;
            s.data = generate_data(s.cfg);
            s.source = train_source(s.data.source, source_train_config(s.cfg)).checkpoint;
            const SegNet net = s.source.instantiate();
            const auto sv = evaluate(net, s.data.source_val, s.cfg.eval_threshold);
            const auto tt = evaluate(net, s.data.target_test, s.cfg.eval_threshold);
            s.source_val_cup = sv.classes[1].dice_mean;
            s.source_val_mean = sv.mean_dice();
            s.source_only_mean = tt.mean_dice();
            s.source_only_cup = tt.classes[1].dice_mean;
            const std::string line =
                fmt("  seed %llu source model: source-domain mean %.2f (cup %.2f), target mean %.2f (cup %.2f)  %.0fs",
                    static_cast<unsigned long long>(seed), s.source_val_mean, s.source_val_cup, s.source_only_mean,
                    s.source_only_cup, elapsed(t0));
            std::printf("%s\n", line.c_str());
            std::fflush(stdout);
            x.log.push_back(line);
            x.seeds.push_back(std::move(s));
        }
        return x;
    }();
    return e;
}

RunConfig preset(const SeedContext& s, const std::string& name) {
    RunConfig c = s.cfg;
    apply_preset(c, name);
    return c;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double population_std(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / v.size());
}

Outcome shift_trend() {
    auto& x = experiment();
    std::vector<double> gap, src_only_mean, src_only_cup, vanilla, rpf, full, full_cup;
    for (auto& s : x.seeds) {
        gap.push_back(s.source_val_cup - s.source_only_cup);
        src_only_mean.push_back(s.source_only_mean);
        src_only_cup.push_back(s.source_only_cup);
        vanilla.push_back(x.run(s, "vanilla", preset(s, "vanilla")).final_mean);
        rpf.push_back(x.run(s, "rpf", preset(s, "rpf")).final_mean);
        const auto& f = x.run(s, "full", preset(s, "full"));
        full.push_back(f.final_mean);
        full_cup.push_back(f.final_cup);
    }
    const double g = mean_of(gap), v = mean_of(vanilla), r = mean_of(rpf), f = mean_of(full);
    const double fc = mean_of(full_cup), sc = mean_of(src_only_cup);
    const bool a = g >= 10.0;
    const bool b = f - v >= 2.0 && fc - sc >= 5.0;
    const bool c = v < r && r <= f;
    return {a && b && c,
            fmt("(a) cup shift gap %.2f >= 10: %s; (b) full - vanilla = %.2f >= 2 and full cup - source-only cup = "
                "%.2f >= 5: %s; (c) vanilla %.2f < +RPF %.2f <= full %.2f: %s [source-only mean %.2f; means over 3 seeds]",
                g, a ? "yes" : "NO", f - v, fc - sc, b ? "yes" : "NO", v, r, f, c ? "yes" : "NO",
                mean_of(src_only_mean))};
}

Outcome ugema_stability() {
    auto& x = experiment();
    std::vector<double> ug_last5, plain_last5, ug_std, plain_std;
    for (auto& s : x.seeds) {
        RunConfig plain = preset(s, "full");
        plain.ugema = UgemaMode::PlainEma;
        const auto& u = x.run(s, "full", preset(s, "full"));
        const auto& p = x.run(s, "full+plain_ema", plain);
        auto tail = [](const std::vector<double>& v, std::size_t n) {
            return std::vector<double>(v.end() - static_cast<std::ptrdiff_t>(std::min(n, v.size())), v.end());
        };
        ug_last5.push_back(mean_of(tail(u.epoch_dice, 5)));
        plain_last5.push_back(mean_of(tail(p.epoch_dice, 5)));
        ug_std.push_back(population_std(tail(u.epoch_dice, 10)));
        plain_std.push_back(population_std(tail(p.epoch_dice, 10)));
    }
    const double ul = mean_of(ug_last5), pl = mean_of(plain_last5), us = mean_of(ug_std), ps = mean_of(plain_std);
    return {ul >= pl && us <= ps,
            fmt("final-5-epoch mean Dice UG-EMA %.2f >= plain EMA %.2f: %s; last-10-epoch Dice std UG-EMA %.2f <= "
                "plain EMA %.2f: %s [means over 3 seeds]",
                ul, pl, ul >= pl ? "yes" : "NO", us, ps, us <= ps ? "yes" : "NO")};
}

Outcome scale_robustness() {
    auto& x = experiment();
    std::vector<std::pair<double, double>> by_s;
    std::string row;
    for (double sv : {0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45}) {
        std::vector<double> finals;
        for (auto& s : x.seeds) {
            RunConfig c = preset(s, "full");
            c.scale_s = sv;
            finals.push_back(x.run(s, sv == 0.25 ? std::string("full") : fmt("full s=%.2f", sv), c).final_mean);
        }
        by_s.emplace_back(sv, mean_of(finals));
        row += fmt(" %.2f:%.2f", sv, by_s.back().second);
    }
    double lo = 1e9, hi = -1e9;
    for (const auto& [sv, d] : by_s) lo = std::min(lo, d), hi = std::max(hi, d);
    return {hi - lo < 1.5, fmt("final mean Dice by s (mean over 3 seeds):%s; spread %.2f < 1.5", row.c_str(), hi - lo)};
}

Outcome source_free_audit() {
    auto& x = experiment();
    if (x.adaptation_runs == 0) {
        for (auto& s : x.seeds) x.run(s, "full", preset(s, "full"));
    }
    return {x.audit_failures == 0 && x.total_gt_reads == 0,
            fmt("%zu adaptation runs, target ground-truth reads during adaptation: %zu (runs with reads: %zu)",
                x.adaptation_runs, x.total_gt_reads, x.audit_failures)};
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    std::string json_path;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
        } else if (a == "--json" && i + 1 < argc) {
            json_path = argv[++i];
        } else {
            std::fprintf(stderr, "usage: acceptance [--only 1,2,...] [--json results.json]\n");
            return 2;
        }
    }
    set_log_level(LogLevel::Warn);

    struct Spec {
        int id;
        const char* name;
        double limit;
        std::function<Outcome()> run;
    };
    const std::vector<Spec> specs = {
        {1, "RPF oracle equivalence", 60, rpf_oracle},
        {2, "Algorithm 1 oracle equivalence", 10, ugema_oracle},
        {3, "gradient correctness", 300, gradient_check},
        {4, "quantile correctness", 30, quantile_checks},
        {5, "inverted Gaussian analytics", 0, gaussian_checks},
        {6, "metric correctness", 0, metric_checks},
        {7, "synthetic-shift trend", 1800, shift_trend},
        {8, "UG-EMA stability", 1200, ugema_stability},
        {9, "scale robustness", 2700, scale_robustness},
        {10, "source-free audit", 0, source_free_audit},
    };

    std::vector<Result> results;
    for (const auto& s : specs) {
        if (!only.empty() && !only.count(s.id)) continue;
        const auto t0 = Clock::now();
        Result r{s.id, s.name, {}, 0.0, s.limit};
        try {
            r.outcome = s.run();
        } catch (const std::exception& e) {
            r.outcome = {false, std::string("exception: ") + e.what()};
        }
        r.seconds = elapsed(t0);
        // Criteria 7-9 share the source models; the runtime limit applies to each criterion's own runs.
        bool in_time = r.limit_seconds == 0.0 || r.seconds <= r.limit_seconds;
        std::printf("%s %d %s: %s (%.1f s%s)\n", r.outcome.passed && in_time ? "PASS" : "FAIL", r.id, r.name.c_str(),
                    r.outcome.detail.c_str(), r.seconds,
                    in_time ? "" : fmt(", over the %.0f s limit", r.limit_seconds).c_str());
        std::fflush(stdout);
        r.outcome.passed = r.outcome.passed && in_time;
        results.push_back(r);
    }

    std::size_t passed = 0;
    for (const auto& r : results) passed += r.outcome.passed;
    std::printf("%zu/%zu criteria passed\n", passed, results.size());

    if (!json_path.empty()) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& r : results)
            j.push_back({{"criterion", r.id},
                         {"name", r.name},
                         {"passed", r.outcome.passed},
                         {"detail", r.outcome.detail},
                         {"seconds", r.seconds}});
        std::ofstream(json_path) << j.dump(2) << '\n';
    }
    return 0;
}
