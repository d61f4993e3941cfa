#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "plumeseg/geo.hpp"
#include "plumeseg/timeutil.hpp"

namespace plumeseg {

/// One smoke plume outline in map units. First ring is the exterior, any
/// further rings are holes. Rings are closed: first point == last point.
struct PlumePolygon {
    std::vector<std::vector<Eigen::Vector2d>> rings;
    UtcInstant start = 0;
    UtcInstant end = 0;
    std::string source_id;

    void validate() const;  // throws FormatError on broken invariants
};

struct AnnotationSet {
    std::vector<PlumePolygon> polygons;
    std::string crs = "synthetic";
};

struct RejectedFeature {
    int feature_index = -1;
    std::string reason;
};

struct ParseResult {
    AnnotationSet set;
    std::vector<RejectedFeature> rejects;
};

/// GeoJSON FeatureCollection of Polygon/MultiPolygon features with
/// ISO-8601 "Start"/"End" properties. MultiPolygons flatten to one
/// PlumePolygon per part. Unparseable features land in rejects.
ParseResult parse_annotations(const std::string& path);

/// One JSON object per line: {"feature_index": i, "reason": "..."}.
void write_rejects_report(const std::vector<RejectedFeature>& rejects, const std::string& path);

/// Polygons whose validity interval contains t (inclusive both ends).
AnnotationSet match_time(const AnnotationSet& set, UtcInstant t);

/// Even-odd ray casting over all rings; points exactly on an edge count as
/// inside. Crossing ties use the half-open [y_min, y_max) edge rule.
bool point_in_polygon(const Eigen::Vector2d& p, const PlumePolygon& poly);

/// Binary label plane on a pixel grid.
struct BitMask {
    int width = 0;
    int height = 0;
    Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> bits;
    GeoTransform transform;

    static BitMask zeros(int height, int width, const GeoTransform& t = {});

    std::int64_t count() const { return bits.cast<std::int64_t>().sum(); }
    bool any() const { return (bits != 0).any(); }
    bool operator==(const BitMask& other) const {
        return width == other.width && height == other.height && (bits == other.bits).all();
    }
};

/// bit(i,j) = 1 iff the map coordinate of pixel center (i+0.5, j+0.5) lies in
/// the union of the set's polygons.
BitMask rasterize(const AnnotationSet& set, const GeoTransform& grid, int width, int height);

}  // namespace plumeseg
