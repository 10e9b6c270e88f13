#include "up2d/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

namespace up2d {

namespace {

void require_2d(const Tensor& t, const char* what) {
    if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected [H,W], got " + shape_str(t.shape()));
}

std::size_t count(const Tensor& m) {
    std::size_t n = 0;
    for (Scalar v : m.data()) n += v >= 0.5f;
    return n;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) on one row of squared distances.
void edt_1d(std::vector<double>& f) {
    const std::size_t n = f.size();
    std::vector<double> d(n);
    std::vector<std::size_t> v(n);
    std::vector<double> z(n + 1);
    std::size_t k = 0;
    std::size_t first = n;
    for (std::size_t q = 0; q < n; ++q)
        if (f[q] < kInf) {
            first = q;
            break;
        }
    if (first == n) return;
    v[0] = first;
    z[0] = -kInf;
    z[1] = kInf;
    for (std::size_t q = first + 1; q < n; ++q) {
        if (f[q] == kInf) continue;
        const auto qd = static_cast<double>(q);
        double s = 0.0;
        while (true) {
            const auto vk = static_cast<double>(v[k]);
            s = ((f[q] + qd * qd) - (f[v[k]] + vk * vk)) / (2.0 * qd - 2.0 * vk);
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const auto qd = static_cast<double>(q);
        while (z[k + 1] < qd) ++k;
        const auto vk = static_cast<double>(v[k]);
        d[q] = (qd - vk) * (qd - vk) + f[v[k]];
    }
    f = std::move(d);
}

// Squared Euclidean distance to the nearest site, separable over columns then rows.
std::vector<double> squared_distances(const Tensor& sites) {
    const std::size_t H = sites.dim(0), W = sites.dim(1);
    std::vector<double> grid(H * W);
    for (std::size_t i = 0; i < H * W; ++i) grid[i] = sites[i] >= 0.5f ? 0.0 : kInf;
    std::vector<double> line;
    for (std::size_t x = 0; x < W; ++x) {
        line.assign(H, 0.0);
        for (std::size_t y = 0; y < H; ++y) line[y] = grid[y * W + x];
        edt_1d(line);
        for (std::size_t y = 0; y < H; ++y) grid[y * W + x] = line[y];
    }
    for (std::size_t y = 0; y < H; ++y) {
        line.assign(grid.begin() + static_cast<std::ptrdiff_t>(y * W),
                    grid.begin() + static_cast<std::ptrdiff_t>((y + 1) * W));
        edt_1d(line);
        std::copy(line.begin(), line.end(), grid.begin() + static_cast<std::ptrdiff_t>(y * W));
    }
    return grid;
}

double directed_mean(const Tensor& from_boundary, const std::vector<double>& to_squared) {
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < from_boundary.numel(); ++i) {
        if (from_boundary[i] < 0.5f) continue;
        total += std::sqrt(to_squared[i]);
        ++n;
    }
    return total / static_cast<double>(n);
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 0.0};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

} // namespace

double dice(const Tensor& pred, const Tensor& gt) {
    require_same_shape(pred, gt, "dice");
    std::size_t inter = 0, p = 0, g = 0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const bool a = pred[i] >= 0.5f;
        const bool b = gt[i] >= 0.5f;
        inter += a && b;
        p += a;
        g += b;
    }
    if (p + g == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

Tensor boundary(const Tensor& mask) {
    require_2d(mask, "boundary");
    const std::size_t H = mask.dim(0), W = mask.dim(1);
    Tensor b({H, W});
    auto inside = [&](long y, long x) {
        return y >= 0 && x >= 0 && y < static_cast<long>(H) && x < static_cast<long>(W) &&
               mask[static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)] >= 0.5f;
    };
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            const auto yy = static_cast<long>(y);
            const auto xx = static_cast<long>(x);
            if (!inside(yy, xx)) continue;
            if (!inside(yy - 1, xx) || !inside(yy + 1, xx) || !inside(yy, xx - 1) || !inside(yy, xx + 1))
                b[y * W + x] = 1.0f;
        }
    return b;
}

Tensor distance_transform(const Tensor& sites) {
    require_2d(sites, "distance_transform");
    const auto grid = squared_distances(sites);
    Tensor out(sites.shape());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = static_cast<Scalar>(std::sqrt(grid[i]));
    return out;
}

std::optional<double> assd(const Tensor& pred, const Tensor& gt) {
    require_same_shape(pred, gt, "assd");
    require_2d(pred, "assd");
    if (count(pred) == 0 || count(gt) == 0) return std::nullopt;
    const Tensor bp = boundary(pred);
    const Tensor bg = boundary(gt);
    const double a = directed_mean(bp, squared_distances(bg));
    const double b = directed_mean(bg, squared_distances(bp));
    return 0.5 * (a + b);
}

double EvalReport::mean_dice() const {
    if (classes.empty()) return 0.0;
    double t = 0.0;
    for (const auto& c : classes) t += c.dice_mean;
    return t / static_cast<double>(classes.size());
}

void EvalReport::summarize() {
    classes.assign(class_names.size(), ClassSummary{});
    for (std::size_t c = 0; c < class_names.size(); ++c) {
        std::vector<double> d, a;
        for (const auto& r : records) {
            if (r.class_index != c) continue;
            d.push_back(100.0 * r.dice);
            if (r.assd) a.push_back(*r.assd);
            else ++classes[c].assd_undefined;
        }
        std::tie(classes[c].dice_mean, classes[c].dice_std) = mean_std(d);
        std::tie(classes[c].assd_mean, classes[c].assd_std) = mean_std(a);
    }
}

void EvalReport::write_csv(std::ostream& os) const {
    os << "id,class,dice,assd\n";
    for (const auto& r : records) {
        os << r.id << ',' << class_names.at(r.class_index) << ',' << std::setprecision(8) << r.dice << ',';
        if (r.assd) os << *r.assd;
        else os << "undefined";
        os << '\n';
    }
}

void EvalReport::write_markdown(std::ostream& os, const std::string& title) const {
    os << "### " << title << "\n\n| Class | Dice [%] | ASSD [pixel] | ASSD undefined |\n|---|---|---|---|\n";
    os << std::fixed << std::setprecision(2);
    for (std::size_t c = 0; c < classes.size(); ++c) {
        const auto& s = classes[c];
        os << "| " << class_names[c] << " | " << s.dice_mean << " ± " << s.dice_std << " | " << s.assd_mean << " ± "
           << s.assd_std << " | " << s.assd_undefined << " |\n";
    }
    os << "| mean | " << mean_dice() << " | | |\n\n";
    os.unsetf(std::ios::fixed);
}

} // namespace up2d
