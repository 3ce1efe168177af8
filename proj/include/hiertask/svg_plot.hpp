#pragma once

#include <filesystem>
#include <vector>

namespace hiertask {

/// Reads a results CSV and writes grouped bar charts (one group per
/// encoder/weights/dropout combination, one bar per architecture mode) as
/// static SVG. Returns the files written: model_accuracy.svg and
/// make_accuracy.svg. Deterministic bytes for a fixed input.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& results_csv,
                                              const std::filesystem::path& out_dir);

/// Bar geometry constants shared with tests that parse the SVG back.
namespace svg_layout {
inline constexpr double plot_height = 260.0;
inline constexpr double plot_top = 40.0;
inline constexpr double margin_left = 60.0;
inline constexpr double bar_width = 26.0;
inline constexpr double bar_gap = 6.0;
inline constexpr double group_gap = 34.0;
}  // namespace svg_layout

}  // namespace hiertask
