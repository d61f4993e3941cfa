#pragma once

#include <Eigen/Dense>

#include "plumeseg/errors.hpp"

namespace plumeseg {

/// Affine georeferencing of a pixel grid. Pixel (row i, col j) maps to
///   x = origin_x + j*pixel_w + i*col_rot
///   y = origin_y + j*row_rot + i*pixel_h
/// pixel_h is negative for north-up grids.
struct GeoTransform {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_w = 1.0;
    double pixel_h = -1.0;
    double row_rot = 0.0;
    double col_rot = 0.0;

    double det() const { return pixel_w * pixel_h - col_rot * row_rot; }

    bool valid() const { return pixel_w != 0.0 && pixel_h != 0.0 && det() != 0.0; }

    /// Map coordinate of fractional pixel position (row, col).
    Eigen::Vector2d pixel_to_map(double row, double col) const {
        return {origin_x + col * pixel_w + row * col_rot,
                origin_y + col * row_rot + row * pixel_h};
    }

    /// Map coordinate of the center of pixel (row, col).
    Eigen::Vector2d pixel_center(int row, int col) const {
        return pixel_to_map(row + 0.5, col + 0.5);
    }

    /// Fractional (row, col) of a map point; inverse of pixel_to_map.
    Eigen::Vector2d map_to_pixel(double x, double y) const {
        const double d = det();
        if (d == 0.0) throw NumericsError("GeoTransform is singular");
        const double dx = x - origin_x;
        const double dy = y - origin_y;
        // Solve [pixel_w col_rot; row_rot pixel_h] * [col; row] = [dx; dy].
        const double col = (dx * pixel_h - dy * col_rot) / d;
        const double row = (dy * pixel_w - dx * row_rot) / d;
        return {row, col};
    }

    /// Transform of a window whose pixel (0,0) is the source pixel (row0, col0).
    GeoTransform translated(int row0, int col0) const {
        GeoTransform t = *this;
        const Eigen::Vector2d o = pixel_to_map(row0, col0);
        t.origin_x = o.x();
        t.origin_y = o.y();
        return t;
    }

    bool operator==(const GeoTransform&) const = default;
};

}  // namespace plumeseg
