#pragma once

#include <map>
#include <optional>
#include <variant>

#include "plumeseg/annotations.hpp"
#include "plumeseg/timeutil.hpp"

namespace plumeseg {

struct Station {
    std::string id;
    Eigen::Vector2d location;  // map units, scene CRS
    std::string crs = "synthetic";
};

struct PanelObservation {
    std::string station_id;
    Date date;
    double pm25 = 0.0;  // ug/m3, finite and >= 0
    int smoke = 0;      // {0,1}
};

struct FEResult {
    double beta1 = 0.0;
    std::map<std::string, double> station_effects;  // alpha_i
    double r2 = 0.0, adj_r2 = 0.0, within_r2 = 0.0, within_adj_r2 = 0.0;
    std::int64_t n_obs = 0, n_stations = 0;
    std::vector<double> residuals;           // panel row order
    std::optional<double> beta1_se;          // reserved, unpopulated
};

/// One day's exposure evidence: rasterized masks or raw annotation sets.
using DaySources = std::variant<std::vector<BitMask>, std::vector<AnnotationSet>>;

/// 1 iff ANY of the day's sources covers the station. Mask path: the pixel
/// containing the station's map point is set (stations outside a mask's grid
/// skip that mask). Polygon path: point-in-polygon against every polygon.
int smoke_indicator(const Station& station, const DaySources& sources);

struct Pm25Record {
    std::string station_id;
    Date date;
    double pm25 = 0.0;
};

/// Joins readings with exposure: one row per (station, date) holding a PM2.5
/// reading; rows ordered by (station_id, date). Duplicate readings -> DataError.
std::vector<PanelObservation> build_panel(const std::vector<Station>& stations,
                                          const std::vector<Pm25Record>& pm25_records,
                                          const std::map<Date, DaySources>& exposure);

/// Within (fixed-effects) estimator of pm25 = beta1*smoke + alpha_i + eps.
FEResult fe_fit(const std::vector<PanelObservation>& panel);

/// Least-squares-dummy-variable OLS of the same model via a dense solver;
/// test oracle for fe_fit.
FEResult lsdv_oracle(const std::vector<PanelObservation>& panel);

/// CSV loaders. PM2.5: header station_id,date,pm25. Stations: header
/// station_id,x,y,crs.
std::vector<Pm25Record> read_pm25_csv(const std::string& path);
std::vector<Station> read_stations_csv(const std::string& path);

/// JSON {beta1, r2, adj_r2, within_r2, within_adj_r2, n_obs, n_stations}.
void write_fe_json(const FEResult& result, const std::string& path);
/// CSV station_id,date,residual aligned with the panel rows.
void write_residuals_csv(const FEResult& result, const std::vector<PanelObservation>& panel,
                         const std::string& path);

}  // namespace plumeseg
