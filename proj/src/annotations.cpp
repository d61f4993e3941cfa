#include "plumeseg/annotations.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>

#include "plumeseg/errors.hpp"

namespace plumeseg {

using nlohmann::json;

namespace {

double ring_signed_area(const std::vector<Eigen::Vector2d>& ring) {
    double a = 0.0;
    for (size_t i = 0; i + 1 < ring.size(); ++i)
        a += ring[i].x() * ring[i + 1].y() - ring[i + 1].x() * ring[i].y();
    return 0.5 * a;
}

std::vector<Eigen::Vector2d> parse_ring(const json& coords) {
    std::vector<Eigen::Vector2d> ring;
    for (const auto& pt : coords) {
        if (!pt.is_array() || pt.size() < 2) throw FormatError("ring point is not [x, y]");
        ring.emplace_back(pt[0].get<double>(), pt[1].get<double>());
    }
    return ring;
}

std::vector<std::vector<Eigen::Vector2d>> parse_polygon_rings(const json& coords) {
    std::vector<std::vector<Eigen::Vector2d>> rings;
    for (const auto& ring : coords) rings.push_back(parse_ring(ring));
    return rings;
}

bool point_on_segment(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                      const Eigen::Vector2d& b) {
    const Eigen::Vector2d ab = b - a;
    const Eigen::Vector2d ap = p - a;
    const double cross = ab.x() * ap.y() - ab.y() * ap.x();
    if (cross != 0.0) return false;
    const double dot = ap.dot(ab);
    return dot >= 0.0 && dot <= ab.squaredNorm();
}

}  // namespace

void PlumePolygon::validate() const {
    if (rings.empty()) throw FormatError("polygon has no rings");
    for (const auto& ring : rings) {
        if (ring.size() < 4) throw FormatError("ring has fewer than 4 points");
        if (ring.front() != ring.back()) throw FormatError("ring is not closed");
    }
    if (start > end) throw FormatError("polygon Start is after End");
    if (ring_signed_area(rings.front()) == 0.0)
        throw FormatError("exterior ring has zero area");
}

ParseResult parse_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(path + ": malformed JSON: " + e.what());
    }
    if (!j.is_object() || j.value("type", "") != "FeatureCollection")
        throw FormatError(path + ": not a GeoJSON FeatureCollection");

    ParseResult result;
    if (j.contains("crs") && j["crs"].is_string()) result.set.crs = j["crs"].get<std::string>();

    const auto& features = j.value("features", json::array());
    for (int idx = 0; idx < static_cast<int>(features.size()); ++idx) {
        const auto& f = features[idx];
        try {
            if (f.value("type", "") != "Feature") throw FormatError("not a Feature");
            const auto& props = f.at("properties");
            if (!props.contains("Start") || !props.contains("End"))
                throw FormatError("missing Start/End properties");
            const UtcInstant start = parse_iso8601(props["Start"].get<std::string>());
            const UtcInstant end = parse_iso8601(props["End"].get<std::string>());

            const auto& geom = f.at("geometry");
            const std::string gtype = geom.value("type", "");
            std::vector<std::vector<std::vector<Eigen::Vector2d>>> parts;
            if (gtype == "Polygon") {
                parts.push_back(parse_polygon_rings(geom.at("coordinates")));
            } else if (gtype == "MultiPolygon") {
                for (const auto& part : geom.at("coordinates"))
                    parts.push_back(parse_polygon_rings(part));
            } else {
                throw FormatError("unsupported geometry type: " + gtype);
            }

            std::vector<PlumePolygon> polys;
            for (size_t p = 0; p < parts.size(); ++p) {
                PlumePolygon poly;
                poly.rings = parts[p];
                poly.start = start;
                poly.end = end;
                poly.source_id = "feature" + std::to_string(idx) +
                                 (parts.size() > 1 ? "_part" + std::to_string(p) : "");
                poly.validate();
                polys.push_back(std::move(poly));
            }
            for (auto& poly : polys) result.set.polygons.push_back(std::move(poly));
        } catch (const std::exception& e) {
            result.rejects.push_back({idx, e.what()});
        }
    }
    return result;
}

void write_rejects_report(const std::vector<RejectedFeature>& rejects, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& r : rejects) {
        json line = {{"feature_index", r.feature_index}, {"reason", r.reason}};
        out << line.dump() << "\n";
    }
}

AnnotationSet match_time(const AnnotationSet& set, UtcInstant t) {
    AnnotationSet out;
    out.crs = set.crs;
    for (const auto& poly : set.polygons)
        if (poly.start <= t && t <= poly.end) out.polygons.push_back(poly);
    return out;
}

bool point_in_polygon(const Eigen::Vector2d& p, const PlumePolygon& poly) {
    // Exactly on any edge counts as inside, hole edges included.
    for (const auto& ring : poly.rings)
        for (size_t i = 0; i + 1 < ring.size(); ++i)
            if (point_on_segment(p, ring[i], ring[i + 1])) return true;

    // Even-odd crossing count over all rings; holes flip parity back out.
    // The (ay > py) != (by > py) test realizes the half-open [y_min, y_max)
    // edge rule and skips horizontal edges.
    bool inside = false;
    for (const auto& ring : poly.rings) {
        for (size_t i = 0; i + 1 < ring.size(); ++i) {
            const Eigen::Vector2d& a = ring[i];
            const Eigen::Vector2d& b = ring[i + 1];
            if ((a.y() > p.y()) != (b.y() > p.y())) {
                const double xint = a.x() + (p.y() - a.y()) / (b.y() - a.y()) * (b.x() - a.x());
                if (xint > p.x()) inside = !inside;
            }
        }
    }
    return inside;
}

BitMask BitMask::zeros(int height, int width, const GeoTransform& t) {
    BitMask m;
    m.width = width;
    m.height = height;
    m.bits.setZero(height, width);
    m.transform = t;
    return m;
}

BitMask rasterize(const AnnotationSet& set, const GeoTransform& grid, int width, int height) {
    BitMask mask = BitMask::zeros(height, width, grid);

    for (const auto& poly : set.polygons) {
        // Bounding box in map space prunes the per-pixel test.
        double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
        double ymin = xmin, ymax = -xmin;
        for (const auto& pt : poly.rings.front()) {
            xmin = std::min(xmin, pt.x());
            xmax = std::max(xmax, pt.x());
            ymin = std::min(ymin, pt.y());
            ymax = std::max(ymax, pt.y());
        }
        for (int i = 0; i < height; ++i) {
            for (int j = 0; j < width; ++j) {
                if (mask.bits(i, j)) continue;
                const Eigen::Vector2d c = grid.pixel_center(i, j);
                if (c.x() < xmin || c.x() > xmax || c.y() < ymin || c.y() > ymax) continue;
                if (point_in_polygon(c, poly)) mask.bits(i, j) = 1;
            }
        }
    }
    return mask;
}

}  // namespace plumeseg
