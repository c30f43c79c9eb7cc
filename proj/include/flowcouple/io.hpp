#pragma once

#include <string>
#include <vector>

namespace flowcouple {

// Writes via a temp file in the same directory plus rename, so readers never
// observe a partial file.
void write_file_atomic(const std::string& path, const std::string& content);

// full round-trip precision ("%.17g")
std::string format_double(double v);

std::vector<std::vector<std::string>> read_csv(const std::string& path);

// Minimal self-contained SVG scene (no external references).
class SvgWriter {
public:
    SvgWriter(double width, double height, double min_x, double min_y, double max_x, double max_y);

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                  double stroke_width = 1.0, double opacity = 1.0);
    void circle(double x, double y, double r, const std::string& color, double opacity = 1.0);
    std::string finish() const;

private:
    double to_px_x(double x) const;
    double to_px_y(double y) const;
    double width_, height_, min_x_, min_y_, max_x_, max_y_;
    std::string body_;
};

}  // namespace flowcouple
