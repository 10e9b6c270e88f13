#include "up2d/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace up2d {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string fmt(double v, int precision = 2) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v;
    return os.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    return os;
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    return nlohmann::json::parse(is);
}

double number_or_nan(const nlohmann::json& j) {
    return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

} // namespace

void write_svg_lines(std::ostream& os, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<Series>& series) {
    const double W = 720, H = 420, left = 70, right = 180, top = 40, bottom = 55;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (const auto& [x, y] : s.points) {
            if (!std::isfinite(y)) continue;
            x0 = std::min(x0, x), x1 = std::max(x1, x);
            y0 = std::min(y0, y), y1 = std::max(y1, y);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double pad = 0.05 * (y1 - y0);
    y0 -= pad, y1 += pad;
    const double pw = W - left - right, ph = H - top - bottom;
    auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
    auto sy = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << left + pw / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
       << "</text>\n";
    os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"#333\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double xv = x0 + (x1 - x0) * i / 5.0, yv = y0 + (y1 - y0) * i / 5.0;
        os << "<line x1=\"" << sx(xv) << "\" y1=\"" << top + ph << "\" x2=\"" << sx(xv) << "\" y2=\"" << top + ph + 5
           << "\" stroke=\"#333\"/>";
        os << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << fmt(xv, 1)
           << "</text>\n";
        os << "<line x1=\"" << left << "\" y1=\"" << sy(yv) << "\" x2=\"" << left + pw << "\" y2=\"" << sy(yv)
           << "\" stroke=\"#ddd\"/>";
        os << "<text x=\"" << left - 6 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << fmt(yv, 3)
           << "</text>\n";
    }
    os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << escape(x_label)
       << "</text>\n";
    os << "<text transform=\"translate(16," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
       << escape(y_label) << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const char* color = kPalette[k % std::size(kPalette)];
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
        for (const auto& [x, y] : series[k].points)
            if (std::isfinite(y)) os << fmt(sx(x), 1) << ',' << fmt(sy(y), 1) << ' ';
        os << "\"/>\n";
        const double ly = top + 14 + 18.0 * static_cast<double>(k);
        os << "<line x1=\"" << left + pw + 12 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 32 << "\" y2=\"" << ly
           << "\" stroke=\"" << color << "\" stroke-width=\"3\"/>";
        os << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << escape(series[k].name) << "</text>\n";
    }
    os << "</svg>\n";
}

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
    auto os = open_out(path);
    for (const auto& r : rows) os << r.dump() << '\n';
}

std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    std::vector<nlohmann::json> rows;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) rows.push_back(nlohmann::json::parse(line));
    return rows;
}

void write_run(const std::filesystem::path& dir, const AdaptResult& result, const RunConfig& config,
               const nlohmann::json& final_evaluation) {
    std::filesystem::create_directories(dir);
    std::vector<nlohmann::json> steps, epochs;
    for (const auto& s : result.steps) steps.push_back(s.to_json());
    for (const auto& e : result.epochs) epochs.push_back(e.to_json());
    write_jsonl(dir / "steps.jsonl", steps);
    write_jsonl(dir / "epochs.jsonl", epochs);
    save_checkpoint(dir / "student.ckpt", result.student);
    save_checkpoint(dir / "teacher.ckpt", result.teacher);
    config.save(dir / "config.txt");
    const nlohmann::json summary{{"toggles", config.toggle_label()},
                                 {"seed", config.seed},
                                 {"teacher_updates", result.update_count},
                                 {"rejected_uncertainties", result.rejected_uncertainties},
                                 {"invalid_prototypes", result.invalid_prototypes},
                                 {"ground_truth_reads", result.ground_truth_reads},
                                 {"student_hash", std::to_string(result.student.param_hash())},
                                 {"final", final_evaluation}};
    open_out(dir / "summary.json") << summary.dump(2) << '\n';
}

void write_report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<Series> dice_curves, uncertainty_curves;
    std::ostringstream table;
    table << "| Run | Toggles | Disc Dice [%] | Cup Dice [%] | Mean Dice [%] | Disc ASSD | Cup ASSD | Teacher updates | "
             "GT reads |\n|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& run : runs) {
        const auto summary = read_json(run / "summary.json");
        const std::string name = run.filename().string();
        const auto& fin = summary["final"];
        auto cls = [&](const char* c, const char* k) {
            return fin.contains(c) ? fmt(number_or_nan(fin[c][k])) : std::string("-");
        };
        table << "| " << name << " | " << summary["toggles"].get<std::string>() << " | " << cls("disc", "dice") << " | "
              << cls("cup", "dice") << " | " << (fin.contains("mean_dice") ? fmt(number_or_nan(fin["mean_dice"])) : "-")
              << " | " << cls("disc", "assd") << " | " << cls("cup", "assd") << " | " << summary["teacher_updates"]
              << " | " << summary["ground_truth_reads"] << " |\n";

        Series dice{name, {}}, unc{name, {}};
        for (const auto& e : read_jsonl(run / "epochs.jsonl"))
            if (e.contains("eval")) dice.points.emplace_back(e["epoch"].get<double>() + 1.0, number_or_nan(e["eval"]["mean_dice"]));
        double step = 0;
        for (const auto& s : read_jsonl(run / "steps.jsonl")) unc.points.emplace_back(step++, number_or_nan(s["E_b"]));
        if (!dice.points.empty()) dice_curves.push_back(std::move(dice));
        uncertainty_curves.push_back(std::move(unc));
    }
    auto md = open_out(out_dir / "report.md");
    md << "# Adaptation report\n\n" << table.str() << '\n';
    if (!dice_curves.empty()) {
        auto svg = open_out(out_dir / "dice_curves.svg");
        write_svg_lines(svg, "Target mean Dice per epoch", "epoch", "mean Dice [%]", dice_curves);
        md << "![mean Dice per epoch](dice_curves.svg)\n\n";
    }
    auto svg = open_out(out_dir / "uncertainty.svg");
    write_svg_lines(svg, "Batch uncertainty E_b", "step", "E_b", uncertainty_curves);
    md << "![batch uncertainty](uncertainty.svg)\n";
}

} // namespace up2d
