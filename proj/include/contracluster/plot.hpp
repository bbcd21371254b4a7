#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "contracluster/array.hpp"
#include "contracluster/errors.hpp"

namespace contracluster {

namespace detail {

// Evenly spaced hues; enough contrast for <= ~20 classes.
inline std::string label_color(int label, int label_count) {
    const double h = 360.0 * static_cast<double>(label) / std::max(1, label_count);
    const double s = 0.65, v = 0.85;
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
    const double m = v - c;
    double r = 0, g = 0, b = 0;
    if (h < 60) { r = c; g = x; }
    else if (h < 120) { r = x; g = c; }
    else if (h < 180) { g = c; b = x; }
    else if (h < 240) { g = x; b = c; }
    else if (h < 300) { r = x; b = c; }
    else { r = c; b = x; }
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", static_cast<int>((r + m) * 255),
                  static_cast<int>((g + m) * 255), static_cast<int>((b + m) * 255));
    return buf;
}

inline void write_scatter_svg(const std::string& path, const Array<double>& coords,
                              const std::vector<int>& labels, const std::string& title) {
    const std::size_t n = coords.dim(0);
    double min_x = 0, max_x = 1, min_y = 0, max_y = 1;
    if (n > 0) {
        min_x = max_x = coords.at2(0, 0);
        min_y = max_y = coords.at2(0, 1);
        for (std::size_t i = 1; i < n; ++i) {
            min_x = std::min(min_x, coords.at2(i, 0));
            max_x = std::max(max_x, coords.at2(i, 0));
            min_y = std::min(min_y, coords.at2(i, 1));
            max_y = std::max(max_y, coords.at2(i, 1));
        }
    }
    const double span_x = std::max(max_x - min_x, 1e-9);
    const double span_y = std::max(max_y - min_y, 1e-9);
    const int size = 640, margin = 40;
    int label_count = 0;
    for (int l : labels) label_count = std::max(label_count, l + 1);

    std::ofstream f(path);
    if (!f) throw io_error("cannot write " + path);
    f << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << " " << size << "\">\n"
      << "  <rect width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n"
      << "  <text x=\"" << margin << "\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n  <g>\n";
    for (std::size_t i = 0; i < n; ++i) {
        const double px =
            margin + (coords.at2(i, 0) - min_x) / span_x * (size - 2.0 * margin);
        const double py =
            margin + (coords.at2(i, 1) - min_y) / span_y * (size - 2.0 * margin);
        f << "    <circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"2.5\" fill=\""
          << label_color(labels[i], label_count) << "\" fill-opacity=\"0.75\"/>\n";
    }
    f << "  </g>\n</svg>\n";
}

} // namespace detail

// Three scatter views of the embedded latent space (real labels, raw cluster
// labels, clusters mapped onto real labels) plus the raw coordinates as CSV.
inline void export_plots(const Array<double>& coords, const std::vector<int>& real_labels,
                         const std::vector<int>& cluster_labels,
                         const std::vector<int>& mapped_labels, const std::string& out_dir) {
    const std::size_t n = coords.dim(0);
    if (real_labels.size() != n || cluster_labels.size() != n || mapped_labels.size() != n)
        throw argument_error("export_plots: inconsistent lengths");
    std::filesystem::create_directories(out_dir);

    detail::write_scatter_svg(out_dir + "/tsne_real_labels.svg", coords, real_labels,
                              "A: real labels");
    detail::write_scatter_svg(out_dir + "/tsne_cluster_labels.svg", coords, cluster_labels,
                              "B: cluster labels");
    detail::write_scatter_svg(out_dir + "/tsne_mapped_labels.svg", coords, mapped_labels,
                              "C: cluster labels mapped on real labels");

    std::ofstream csv(out_dir + "/tsne_coords.csv");
    if (!csv) throw io_error("cannot write " + out_dir + "/tsne_coords.csv");
    csv << "x,y,real_label,cluster_label,mapped_label\n";
    for (std::size_t i = 0; i < n; ++i)
        csv << coords.at2(i, 0) << ',' << coords.at2(i, 1) << ',' << real_labels[i] << ','
            << cluster_labels[i] << ',' << mapped_labels[i] << '\n';
}

// Grayscale tiles laid out on a grid, written as binary PGM.
inline void write_tile_grid_pgm(const std::string& path, const std::vector<Array<float>>& tiles) {
    if (tiles.empty()) throw argument_error("write_tile_grid_pgm: no tiles");
    const std::size_t h = tiles[0].dim(0), w = tiles[0].dim(1);
    const std::size_t cols = static_cast<std::size_t>(
        std::ceil(std::sqrt(static_cast<double>(tiles.size()))));
    const std::size_t rows = (tiles.size() + cols - 1) / cols;
    const std::size_t pad = 2;
    const std::size_t out_w = cols * (w + pad) + pad;
    const std::size_t out_h = rows * (h + pad) + pad;

    std::vector<std::uint8_t> canvas(out_w * out_h, 32);
    for (std::size_t t = 0; t < tiles.size(); ++t) {
        const std::size_t r0 = pad + (t / cols) * (h + pad);
        const std::size_t c0 = pad + (t % cols) * (w + pad);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const float v = std::min(1.0f, std::max(0.0f, tiles[t].at2(y, x)));
                canvas[(r0 + y) * out_w + c0 + x] =
                    static_cast<std::uint8_t>(v * 255.0f + 0.5f);
            }
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot write " + path);
    f << "P5\n" << out_w << " " << out_h << "\n255\n";
    f.write(reinterpret_cast<const char*>(canvas.data()),
            static_cast<std::streamsize>(canvas.size()));
}

} // namespace contracluster
