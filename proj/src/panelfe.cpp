#include "plumeseg/panelfe.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "plumeseg/errors.hpp"

namespace plumeseg {

namespace {

bool mask_covers(const BitMask& mask, const Eigen::Vector2d& point) {
    const Eigen::Vector2d rc = mask.transform.map_to_pixel(point.x(), point.y());
    const int row = static_cast<int>(std::floor(rc[0]));
    const int col = static_cast<int>(std::floor(rc[1]));
    if (row < 0 || row >= mask.height || col < 0 || col >= mask.width) return false;  // skip
    return mask.bits(row, col) != 0;
}

struct StationGroup {
    std::vector<int> rows;  // indices into the panel
    double y_mean = 0.0, x_mean = 0.0;
};

std::map<std::string, StationGroup> group_by_station(const std::vector<PanelObservation>& panel) {
    std::map<std::string, StationGroup> groups;
    for (size_t i = 0; i < panel.size(); ++i) {
        const PanelObservation& o = panel[i];
        if (!std::isfinite(o.pm25) || o.pm25 < 0.0)
            throw DataError("pm25 must be finite and >= 0 (station " + o.station_id + ")");
        if (o.smoke != 0 && o.smoke != 1)
            throw DataError("smoke indicator must be 0 or 1 (station " + o.station_id + ")");
        groups[o.station_id].rows.push_back(static_cast<int>(i));
    }
    for (auto& [id, g] : groups) {
        for (const int i : g.rows) {
            g.y_mean += panel[i].pm25;
            g.x_mean += panel[i].smoke;
        }
        g.y_mean /= static_cast<double>(g.rows.size());
        g.x_mean /= static_cast<double>(g.rows.size());
    }
    return groups;
}

void fill_r2(FEResult& r, const std::vector<PanelObservation>& panel,
             const std::map<std::string, StationGroup>& groups) {
    const double n = static_cast<double>(r.n_obs);
    const double N = static_cast<double>(r.n_stations);
    constexpr double K = 1.0;
    if (n - N - K <= 0.0) throw DofError("fe_fit: n_obs <= n_stations + 1");

    double rss = 0.0;
    for (const double e : r.residuals) rss += e * e;
    double y_bar = 0.0;
    for (const PanelObservation& o : panel) y_bar += o.pm25;
    y_bar /= n;
    double tss = 0.0, tss_w = 0.0;
    for (const auto& [id, g] : groups)
        for (const int i : g.rows) {
            tss += (panel[i].pm25 - y_bar) * (panel[i].pm25 - y_bar);
            tss_w += (panel[i].pm25 - g.y_mean) * (panel[i].pm25 - g.y_mean);
        }

    r.r2 = 1.0 - rss / tss;
    r.adj_r2 = 1.0 - (rss / (n - N - K)) / (tss / (n - 1.0));
    r.within_r2 = 1.0 - rss / tss_w;
    r.within_adj_r2 = 1.0 - (rss / (n - N - K)) / (tss_w / (n - N));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

}  // namespace

int smoke_indicator(const Station& station, const DaySources& sources) {
    if (const auto* masks = std::get_if<std::vector<BitMask>>(&sources)) {
        for (const BitMask& m : *masks)
            if (mask_covers(m, station.location)) return 1;
        return 0;
    }
    const auto& sets = std::get<std::vector<AnnotationSet>>(sources);
    for (const AnnotationSet& set : sets)
        for (const PlumePolygon& poly : set.polygons)
            if (point_in_polygon(station.location, poly)) return 1;
    return 0;
}

std::vector<PanelObservation> build_panel(const std::vector<Station>& stations,
                                          const std::vector<Pm25Record>& pm25_records,
                                          const std::map<Date, DaySources>& exposure) {
    std::map<std::string, const Station*> by_id;
    for (const Station& s : stations) {
        if (!by_id.emplace(s.id, &s).second)
            throw DataError("duplicate station id: " + s.id);
    }

    std::set<std::pair<std::string, Date>> seen;
    std::vector<PanelObservation> panel;
    for (const Pm25Record& rec : pm25_records) {
        if (!seen.insert({rec.station_id, rec.date}).second)
            throw DataError("duplicate PM2.5 record for station " + rec.station_id + " on " +
                            format_date(rec.date));
        const auto st = by_id.find(rec.station_id);
        if (st == by_id.end())
            throw DataError("PM2.5 record for unknown station: " + rec.station_id);
        const auto day = exposure.find(rec.date);
        if (day == exposure.end()) continue;  // no imagery that day: exposure unknown
        PanelObservation o;
        o.station_id = rec.station_id;
        o.date = rec.date;
        o.pm25 = rec.pm25;
        o.smoke = smoke_indicator(*st->second, day->second);
        panel.push_back(std::move(o));
    }
    std::sort(panel.begin(), panel.end(), [](const auto& a, const auto& b) {
        return std::tie(a.station_id, a.date) < std::tie(b.station_id, b.date);
    });
    return panel;
}

FEResult fe_fit(const std::vector<PanelObservation>& panel) {
    if (panel.size() < 2) throw EmptyError("fe_fit: need at least 2 observations");
    const auto groups = group_by_station(panel);

    // x is binary, so within variation exists iff some station mixes 0 and 1.
    bool varies = false;
    for (const auto& [id, g] : groups) {
        const bool has0 = std::any_of(g.rows.begin(), g.rows.end(),
                                      [&](int i) { return panel[i].smoke == 0; });
        const bool has1 = std::any_of(g.rows.begin(), g.rows.end(),
                                      [&](int i) { return panel[i].smoke == 1; });
        if (has0 && has1) varies = true;
    }
    if (!varies) throw NoWithinVariationError("fe_fit: smoke is constant within every station");

    double sxy = 0.0, sxx = 0.0;
    for (const auto& [id, g] : groups)
        for (const int i : g.rows) {
            const double xt = panel[i].smoke - g.x_mean;
            const double yt = panel[i].pm25 - g.y_mean;
            sxy += xt * yt;
            sxx += xt * xt;
        }

    FEResult r;
    r.beta1 = sxy / sxx;
    r.n_obs = static_cast<std::int64_t>(panel.size());
    r.n_stations = static_cast<std::int64_t>(groups.size());
    r.residuals.resize(panel.size());
    for (const auto& [id, g] : groups) {
        const double alpha = g.y_mean - r.beta1 * g.x_mean;
        r.station_effects[id] = alpha;
        for (const int i : g.rows)
            r.residuals[i] = panel[i].pm25 - alpha - r.beta1 * panel[i].smoke;
    }
    fill_r2(r, panel, groups);
    return r;
}

FEResult lsdv_oracle(const std::vector<PanelObservation>& panel) {
    if (panel.size() < 2) throw EmptyError("lsdv_oracle: need at least 2 observations");
    const auto groups = group_by_station(panel);
    const int n = static_cast<int>(panel.size());
    const int N = static_cast<int>(groups.size());

    // Columns: [smoke, dummy per station], no intercept.
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, 1 + N);
    Eigen::VectorXd y(n);
    std::vector<std::string> ids;
    for (const auto& [id, g] : groups) ids.push_back(id);
    for (int j = 0; j < N; ++j)
        for (const int i : groups.at(ids[j]).rows) X(i, 1 + j) = 1.0;
    for (int i = 0; i < n; ++i) {
        X(i, 0) = panel[i].smoke;
        y[i] = panel[i].pm25;
    }

    const Eigen::MatrixXd xtx = X.transpose() * X;
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xtx);
    if (qr.rank() < xtx.cols()) throw SingularError("lsdv_oracle: singular design matrix");
    const Eigen::VectorXd beta = qr.solve(X.transpose() * y);

    FEResult r;
    r.beta1 = beta[0];
    r.n_obs = n;
    r.n_stations = N;
    for (int j = 0; j < N; ++j) r.station_effects[ids[j]] = beta[1 + j];
    const Eigen::VectorXd resid = y - X * beta;
    r.residuals.assign(resid.data(), resid.data() + n);
    fill_r2(r, panel, groups);
    return r;
}

std::vector<Pm25Record> read_pm25_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open PM2.5 CSV: " + path);
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) !=
                                       std::vector<std::string>{"station_id", "date", "pm25"})
        throw FormatError("PM2.5 CSV must start with station_id,date,pm25: " + path);
    std::vector<Pm25Record> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 3) throw FormatError("bad PM2.5 CSV row: " + line);
        Pm25Record rec;
        rec.station_id = f[0];
        rec.date = parse_date(f[1]);
        try {
            rec.pm25 = std::stod(f[2]);
        } catch (const std::exception&) {
            throw FormatError("bad pm25 value in row: " + line);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<Station> read_stations_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open stations CSV: " + path);
    std::string line;
    if (!std::getline(in, line) ||
        split_csv_line(line) != std::vector<std::string>{"station_id", "x", "y", "crs"})
        throw FormatError("stations CSV must start with station_id,x,y,crs: " + path);
    std::vector<Station> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 4) throw FormatError("bad stations CSV row: " + line);
        Station s;
        s.id = f[0];
        try {
            s.location = {std::stod(f[1]), std::stod(f[2])};
        } catch (const std::exception&) {
            throw FormatError("bad station coordinate in row: " + line);
        }
        s.crs = f[3];
        out.push_back(std::move(s));
    }
    return out;
}

void write_fe_json(const FEResult& result, const std::string& path) {
    nlohmann::json j{{"beta1", result.beta1},
                     {"r2", result.r2},
                     {"adj_r2", result.adj_r2},
                     {"within_r2", result.within_r2},
                     {"within_adj_r2", result.within_adj_r2},
                     {"n_obs", result.n_obs},
                     {"n_stations", result.n_stations}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write FE result JSON: " + path);
    out << j.dump(2) << '\n';
}

void write_residuals_csv(const FEResult& result, const std::vector<PanelObservation>& panel,
                         const std::string& path) {
    if (result.residuals.size() != panel.size())
        throw ShapeError("residuals/panel length mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write residuals CSV: " + path);
    out << "station_id,date,residual\n";
    out.precision(12);
    for (size_t i = 0; i < panel.size(); ++i)
        out << panel[i].station_id << ',' << format_date(panel[i].date) << ','
            << result.residuals[i] << '\n';
}

}  // namespace plumeseg
