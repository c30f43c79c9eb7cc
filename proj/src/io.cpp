#include "flowcouple/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace flowcouple {

namespace fs = std::filesystem;

void write_file_atomic(const std::string& path, const std::string& content) {
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("write_file_atomic: cannot open " + tmp.string());
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw std::runtime_error("write_file_atomic: write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_csv: cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    return rows;
}

SvgWriter::SvgWriter(double width, double height, double min_x, double min_y, double max_x,
                     double max_y)
    : width_(width), height_(height), min_x_(min_x), min_y_(min_y), max_x_(max_x), max_y_(max_y) {}

double SvgWriter::to_px_x(double x) const {
    return (x - min_x_) / (max_x_ - min_x_) * width_;
}

double SvgWriter::to_px_y(double y) const {
    // SVG y axis points down
    return height_ - (y - min_y_) / (max_y_ - min_y_) * height_;
}

void SvgWriter::polyline(const std::vector<std::pair<double, double>>& pts,
                         const std::string& color, double stroke_width, double opacity) {
    if (pts.empty()) return;
    std::ostringstream os;
    os << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << stroke_width
       << "\" stroke-opacity=\"" << opacity << "\" points=\"";
    for (const auto& [x, y] : pts) os << to_px_x(x) << ',' << to_px_y(y) << ' ';
    os << "\"/>\n";
    body_ += os.str();
}

void SvgWriter::circle(double x, double y, double r, const std::string& color, double opacity) {
    std::ostringstream os;
    os << "  <circle cx=\"" << to_px_x(x) << "\" cy=\"" << to_px_y(y) << "\" r=\"" << r
       << "\" fill=\"" << color << "\" fill-opacity=\"" << opacity << "\"/>\n";
    body_ += os.str();
}

std::string SvgWriter::finish() const {
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
       << height_ << "\" viewBox=\"0 0 " << width_ << ' ' << height_ << "\">\n"
       << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << body_ << "</svg>\n";
    return os.str();
}

}  // namespace flowcouple
