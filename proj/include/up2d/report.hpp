#pragma once

#include "up2d/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace up2d {

struct Series {
    std::string name;
    std::vector<std::pair<double, double>> points;  // (x, y); non-finite y values are skipped
};

/// Self-contained SVG line chart with axes, ticks and a legend.
void write_svg_lines(std::ostream& os, const std::string& title, const std::string& x_label,
                     const std::string& y_label, const std::vector<Series>& series);

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

/// Persists an adaptation run: steps.jsonl, epochs.jsonl, summary.json, student/teacher checkpoints.
void write_run(const std::filesystem::path& dir, const AdaptResult& result, const RunConfig& config,
               const nlohmann::json& final_evaluation);

/// Reads run directories written by write_run() and produces report.md, dice_curves.svg and
/// uncertainty.svg in `out_dir`.
void write_report(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out_dir);

} // namespace up2d
