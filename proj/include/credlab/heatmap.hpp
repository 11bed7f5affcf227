// Hand-rolled SVG heatmaps for per-position realized scores.
//
// Output is fully deterministic: integer geometry, integer colors, doubles
// only inside <title> tooltips (shortest round-trip form). Diverging scale:
// white at zero, saturating red for positive, blue for negative, normalized
// by the largest magnitude across all rows.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "credlab/common.hpp"
#include "credlab/reward.hpp"
#include "credlab/world.hpp"

namespace credlab {

struct HeatmapRow {
    std::string label;
    std::vector<double> values;
    std::vector<std::string> cell_texts;  // optional; token ids by default
};

namespace detail {
inline std::string esc_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '&') out += "&amp;";
        else if (c == '<') out += "&lt;";
        else if (c == '>') out += "&gt;";
        else out += c;
    }
    return out;
}
}  // namespace detail

inline std::string render_heatmap_svg(const std::string& title,
                                      const std::vector<HeatmapRow>& rows) {
    const int cell_w = 72, cell_h = 44, label_w = 130, margin = 10, title_h = 28;
    std::size_t ncols = 0;
    double maxabs = 0.0;
    for (const auto& r : rows) {
        ncols = std::max(ncols, r.values.size());
        for (double v : r.values) maxabs = std::max(maxabs, std::abs(v));
    }
    const int width = label_w + static_cast<int>(ncols) * cell_w + 2 * margin;
    const int height = title_h + static_cast<int>(rows.size()) * cell_h + 2 * margin;
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
           "\" height=\"" + std::to_string(height) + "\" font-family=\"monospace\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg += "<text x=\"" + std::to_string(margin) + "\" y=\"" + std::to_string(margin + 14) +
           "\" font-size=\"14\">" + detail::esc_xml(title) + "</text>\n";
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const int y = title_h + margin + static_cast<int>(r) * cell_h;
        svg += "<text x=\"" + std::to_string(margin) + "\" y=\"" +
               std::to_string(y + cell_h / 2 + 4) + "\" font-size=\"12\">" +
               detail::esc_xml(rows[r].label) + "</text>\n";
        for (std::size_t c = 0; c < rows[r].values.size(); ++c) {
            const double v = rows[r].values[c];
            const double tau = maxabs > 0.0 ? std::max(-1.0, std::min(1.0, v / maxabs)) : 0.0;
            const int shade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(tau))));
            std::string fill;
            if (tau > 0.0)
                fill = "rgb(255," + std::to_string(shade) + "," + std::to_string(shade) + ")";
            else if (tau < 0.0)
                fill = "rgb(" + std::to_string(shade) + "," + std::to_string(shade) + ",255)";
            else
                fill = "rgb(255,255,255)";
            const int x = label_w + margin + static_cast<int>(c) * cell_w;
            svg += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) +
                   "\" width=\"" + std::to_string(cell_w) + "\" height=\"" +
                   std::to_string(cell_h) + "\" fill=\"" + fill +
                   "\" stroke=\"rgb(64,64,64)\"><title>" + fmt_g17(v) + "</title></rect>\n";
            const std::string text = c < rows[r].cell_texts.size() ? rows[r].cell_texts[c] : "";
            const std::string color = shade > 96 ? "black" : "white";
            svg += "<text x=\"" + std::to_string(x + cell_w / 2) + "\" y=\"" +
                   std::to_string(y + cell_h / 2 + 4) + "\" font-size=\"12\" fill=\"" + color +
                   "\" text-anchor=\"middle\">" + detail::esc_xml(text) + "</text>\n";
        }
    }
    svg += "</svg>\n";
    return svg;
}

// Realized per-position score strips along one trajectory. Supported kinds:
// dv (raw teacher/student log-ratio), s / g (input-specific and
// input-generic teacher components at the realized tokens), credit (dv minus
// lambda times the exact prior-generic baseline).
inline std::vector<HeatmapRow> trajectory_score_rows(const WorldSpec& w, const Trajectory& traj,
                                                     const std::vector<std::string>& kinds,
                                                     double lambda) {
    PolicyParams params = params_from_world(w);
    ReferenceState ref = make_reference(params, 1.0);
    std::vector<HeatmapRow> rows;
    for (const auto& kind : kinds) {
        HeatmapRow row;
        row.label = kind;
        for (int tok : traj.tokens) row.cell_texts.push_back("y=" + std::to_string(tok));
        Trajectory scratch = traj;
        if (kind == "dv") {
            sd_reward(ref, params, w, scratch);
            row.values = scratch.realized_rewards;
        } else if (kind == "credit") {
            // dv minus the lenient prior-generic baseline: defined even where
            // a contrastive input cannot produce the observed feedback.
            sd_reward(ref, params, w, scratch);
            std::vector<int> prefix;
            for (int t = 0; t < w.horizon; ++t) {
                const auto g = exact_generic_baseline_lenient(ref, w, prefix, traj.feedback_id,
                                                              TeacherMode::exact_posterior);
                row.values.push_back(scratch.realized_rewards[t] - lambda * g[traj.tokens[t]]);
                prefix.push_back(traj.tokens[t]);
            }
        } else if (kind == "s" || kind == "g") {
            std::vector<int> prefix;
            for (int t = 0; t < w.horizon; ++t) {
                const double matched =
                    teacher_log_row(ref, w, traj.input_id, prefix, traj.feedback_id,
                                    TeacherMode::exact_posterior)[traj.tokens[t]];
                const double gv = exact_generic_baseline_lenient(
                    ref, w, prefix, traj.feedback_id,
                    TeacherMode::exact_posterior)[traj.tokens[t]];
                row.values.push_back(kind == "s" ? matched - gv : gv);
                prefix.push_back(traj.tokens[t]);
            }
        } else {
            throw ParseError("unknown score kind '" + kind + "' (dv|s|g|credit)");
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out << content;
}

}  // namespace credlab
