#include "hiertask/svg_plot.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "hiertask/errors.hpp"

namespace hiertask {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

struct Row {
    std::string encoder;
    std::string mode;
    std::string lambda1;
    std::string lambda2;
    std::string dropout;
    double model_acc = 0.0;
    double make_acc = 0.0;
};

constexpr const char* kModeOrder[3] = {"single_task", "parallel", "cascaded"};
constexpr const char* kModeColor[3] = {"#4878a8", "#e09048", "#60a060"};
constexpr const char* kModeLabel[3] = {"ST", "parallel", "cascaded"};

void write_chart(const std::filesystem::path& path, const std::string& title,
                 const std::map<std::string, std::map<std::string, double>>& groups) {
    using namespace svg_layout;
    const std::size_t n_groups = groups.size();
    const double group_width = 3 * bar_width + 2 * bar_gap;
    const double width =
        margin_left + 20.0 +
        (n_groups == 0 ? 3 * group_width
                       : static_cast<double>(n_groups) * (group_width + group_gap));
    const double height = plot_top + plot_height + 90.0;
    const double base_y = plot_top + plot_height;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\""
        << fmt(height) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg << "<text x=\"" << fmt(margin_left) << "\" y=\"18\" font-size=\"14\">" << title
        << "</text>\n";
    // y axis with gridlines every 0.2
    for (int tick = 0; tick <= 5; ++tick) {
        const double v = 0.2 * tick;
        const double y = base_y - plot_height * v;
        svg << "<line x1=\"" << fmt(margin_left) << "\" y1=\"" << fmt(y) << "\" x2=\""
            << fmt(width - 10.0) << "\" y2=\"" << fmt(y)
            << "\" stroke=\"#cccccc\" stroke-width=\"0.5\"/>\n";
        svg << "<text x=\"" << fmt(margin_left - 34.0) << "\" y=\"" << fmt(y + 4.0) << "\">"
            << fmt(v).substr(0, 3) << "</text>\n";
    }
    svg << "<line x1=\"" << fmt(margin_left) << "\" y1=\"" << fmt(plot_top) << "\" x2=\""
        << fmt(margin_left) << "\" y2=\"" << fmt(base_y)
        << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    svg << "<line x1=\"" << fmt(margin_left) << "\" y1=\"" << fmt(base_y) << "\" x2=\""
        << fmt(width - 10.0) << "\" y2=\"" << fmt(base_y)
        << "\" stroke=\"#000000\" stroke-width=\"1\"/>\n";
    // legend
    for (int m = 0; m < 3; ++m) {
        const double lx = margin_left + 90.0 * m;
        svg << "<rect x=\"" << fmt(lx) << "\" y=\"" << fmt(height - 24.0)
            << "\" width=\"12\" height=\"12\" fill=\"" << kModeColor[m] << "\"/>\n";
        svg << "<text x=\"" << fmt(lx + 16.0) << "\" y=\"" << fmt(height - 14.0) << "\">"
            << kModeLabel[m] << "</text>\n";
    }

    std::size_t gi = 0;
    for (const auto& [label, bars] : groups) {
        const double gx = margin_left + group_gap / 2.0 +
                          static_cast<double>(gi) * (group_width + group_gap);
        for (int m = 0; m < 3; ++m) {
            auto it = bars.find(kModeOrder[m]);
            if (it == bars.end()) continue;
            const double v = it->second;
            const double h = plot_height * v;
            const double x = gx + m * (bar_width + bar_gap);
            svg << "<rect class=\"bar\" x=\"" << fmt(x) << "\" y=\"" << fmt(base_y - h)
                << "\" width=\"" << fmt(bar_width) << "\" height=\"" << fmt(h) << "\" fill=\""
                << kModeColor[m] << "\"/>\n";
        }
        svg << "<text x=\"" << fmt(gx) << "\" y=\"" << fmt(base_y + 16.0) << "\" font-size=\"9\">"
            << label << "</text>\n";
        ++gi;
    }
    svg << "</svg>\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write chart " + path.string());
    out << svg.str();
    if (!out) throw IoError("failed writing chart " + path.string());
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& results_csv,
                                              const std::filesystem::path& out_dir) {
    std::ifstream in(results_csv);
    if (!in) throw IoError("cannot open results " + results_csv.string());
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("results file is empty");
    const std::vector<std::string> header = split_line(line);
    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;

    const std::vector<std::string> needed = {"encoder",  "mode",      "lambda1",
                                             "lambda2",  "dropout",   "model_acc",
                                             "make_acc_direct", "make_acc_derived"};
    std::string missing;
    for (const std::string& name : needed)
        if (!column.count(name)) missing += missing.empty() ? name : ", " + name;
    if (!missing.empty()) throw SchemaError("results file is missing columns: " + missing);

    std::vector<Row> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> f = split_line(line);
        if (f.size() != header.size())
            throw SchemaError("results row " + std::to_string(line_no) + " has " +
                              std::to_string(f.size()) + " fields, expected " +
                              std::to_string(header.size()));
        Row r;
        r.encoder = f[column["encoder"]];
        r.mode = f[column["mode"]];
        r.lambda1 = f[column["lambda1"]];
        r.lambda2 = f[column["lambda2"]];
        r.dropout = f[column["dropout"]];
        try {
            r.model_acc = std::stod(f[column["model_acc"]]);
            const std::string& direct = f[column["make_acc_direct"]];
            r.make_acc = direct.empty() ? std::stod(f[column["make_acc_derived"]])
                                        : std::stod(direct);
        } catch (const std::exception&) {
            throw SchemaError("results row " + std::to_string(line_no) +
                              " has a non-numeric accuracy");
        }
        rows.push_back(std::move(r));
    }

    // group label -> mode -> mean accuracy (over seeds)
    std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> model_groups;
    std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> make_groups;
    for (const Row& r : rows) {
        const std::string label =
            r.encoder + " [" + r.lambda1 + "," + r.lambda2 + "] d=" + r.dropout;
        auto& ma = model_groups[label][r.mode];
        ma.first += r.model_acc;
        ma.second += 1;
        auto& mk = make_groups[label][r.mode];
        mk.first += r.make_acc;
        mk.second += 1;
    }
    auto averaged = [](const std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>>&
                           sums) {
        std::map<std::string, std::map<std::string, double>> out;
        for (const auto& [label, modes] : sums)
            for (const auto& [mode, acc] : modes)
                out[label][mode] = acc.first / static_cast<double>(acc.second);
        return out;
    };

    std::filesystem::create_directories(out_dir);
    std::vector<std::filesystem::path> written;
    written.push_back(out_dir / "model_accuracy.svg");
    write_chart(written.back(), "Test accuracy, model prediction", averaged(model_groups));
    written.push_back(out_dir / "make_accuracy.svg");
    write_chart(written.back(), "Test accuracy, make prediction", averaged(make_groups));
    return written;
}

}  // namespace hiertask
