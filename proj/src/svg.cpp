#include "morekit/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace morekit::svg {

namespace {

const char* kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee",
                          "#aa3377", "#bbbbbb", "#e17c05", "#5d69b1", "#24796c"};
constexpr int kPaletteSize = 10;

std::ofstream open_svg(const std::string& path, int width, int height,
                       const std::vector<std::string>& comments) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width
        << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    for (const auto& c : comments) out << "<!-- " << c << " -->\n";
    return out;
}

double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

void write_scatter(const std::string& path, const Eigen::MatrixXd& points_2d,
                   const std::vector<int>& categories,
                   const std::vector<std::string>& category_names, const std::string& title,
                   const std::vector<std::string>& comments) {
    if (points_2d.cols() < 2) throw std::invalid_argument("write_scatter: need 2 columns");
    if (static_cast<std::size_t>(points_2d.rows()) != categories.size()) {
        throw std::invalid_argument("write_scatter: category length mismatch");
    }
    const int width = 640, height = 520, margin = 50;
    auto out = open_svg(path, width, height, comments);
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"15\">" << title << "</text>\n";

    double xmin = points_2d.col(0).minCoeff(), xmax = points_2d.col(0).maxCoeff();
    double ymin = points_2d.col(1).minCoeff(), ymax = points_2d.col(1).maxCoeff();
    if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
    if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
    const double sx = static_cast<double>(width - 2 * margin) / (xmax - xmin);
    const double sy = static_cast<double>(height - 2 * margin) / (ymax - ymin);

    out << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << width - 2 * margin
        << "\" height=\"" << height - 2 * margin << "\" fill=\"none\" stroke=\"#888888\"/>\n";

    char tmp[192];
    for (Eigen::Index i = 0; i < points_2d.rows(); ++i) {
        const double px = margin + (points_2d(i, 0) - xmin) * sx;
        const double py = height - margin - (points_2d(i, 1) - ymin) * sy;
        const int cat = categories[static_cast<std::size_t>(i)];
        std::snprintf(tmp, sizeof(tmp), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2\" fill=\"%s\" fill-opacity=\"0.7\"/>\n",
                      px, py, kPalette[cat % kPaletteSize]);
        out << tmp;
    }

    int n_cats = 0;
    for (int c : categories) n_cats = std::max(n_cats, c + 1);
    for (int c = 0; c < n_cats; ++c) {
        const int ly = margin + 16 * c;
        std::snprintf(tmp, sizeof(tmp),
                      "<rect x=\"%d\" y=\"%d\" width=\"10\" height=\"10\" fill=\"%s\"/>", width - margin + 6,
                      ly, kPalette[c % kPaletteSize]);
        out << tmp;
        const std::string name = c < static_cast<int>(category_names.size()) ? category_names[static_cast<std::size_t>(c)]
                                                                             : std::to_string(c);
        out << "<text x=\"" << width - margin + 20 << "\" y=\"" << ly + 9
            << "\" font-family=\"sans-serif\" font-size=\"10\">" << name << "</text>\n";
    }
    out << "</svg>\n";
}

void write_box_summary(const std::string& path, const std::vector<std::string>& metric_names,
                       const std::vector<std::vector<double>>& metric_values,
                       const std::string& title, const std::vector<std::string>& comments) {
    if (metric_names.size() != metric_values.size()) {
        throw std::invalid_argument("write_box_summary: name/value length mismatch");
    }
    const int panel_w = 150, height = 360, margin = 45;
    const int width = margin * 2 + panel_w * static_cast<int>(metric_names.size());
    auto out = open_svg(path, width, height, comments);
    out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"15\">" << title << "</text>\n";

    char tmp[256];
    for (std::size_t m = 0; m < metric_names.size(); ++m) {
        std::vector<double> sorted = metric_values[m];
        std::sort(sorted.begin(), sorted.end());
        const double lo = sorted.empty() ? 0.0 : sorted.front();
        const double hi = sorted.empty() ? 1.0 : sorted.back();
        const double q1 = quantile_sorted(sorted, 0.25);
        const double med = quantile_sorted(sorted, 0.5);
        const double q3 = quantile_sorted(sorted, 0.75);
        const double span = std::max(hi - lo, 1e-12);
        const double x0 = margin + panel_w * static_cast<double>(m) + panel_w / 2.0;
        const double top = margin + 20, bottom = height - margin;
        auto ypos = [&](double v) { return bottom - (v - lo) / span * (bottom - top); };

        std::snprintf(tmp, sizeof(tmp), "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#333\"/>\n",
                      x0, ypos(lo), x0, ypos(hi));
        out << tmp;
        std::snprintf(tmp, sizeof(tmp),
                      "<rect x=\"%.1f\" y=\"%.1f\" width=\"44\" height=\"%.1f\" fill=\"#8fb8de\" stroke=\"#333\"/>\n",
                      x0 - 22, ypos(q3), std::max(ypos(q1) - ypos(q3), 0.5));
        out << tmp;
        std::snprintf(tmp, sizeof(tmp),
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#13294b\" stroke-width=\"2\"/>\n",
                      x0 - 22, ypos(med), x0 + 22, ypos(med));
        out << tmp;
        out << "<text x=\"" << x0 << "\" y=\"" << height - margin + 18
            << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << metric_names[m]
            << "</text>\n";
        std::snprintf(tmp, sizeof(tmp),
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                      "font-size=\"9\">%.4g</text>\n",
                      x0, top - 6, hi);
        out << tmp;
    }
    out << "</svg>\n";
}

}  // namespace morekit::svg
