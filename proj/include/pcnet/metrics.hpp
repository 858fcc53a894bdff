#pragma once

// Per-condition metrics rows, the relative hyper-parameter table and SVG
// line charts.

#include "pcnet/corruption.hpp"
#include "pcnet/hyperparams.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pcnet {
inline namespace PCNET_PRECISION_NS {

/// One row per (condition, restart, time-step).
struct MetricsRecord {
    std::string experiment;
    std::string regime;  // hp_only, baseline_same, ...
    std::string mask = "full";
    NoiseKind kind = NoiseKind::clean;
    int level = 0;
    int restart = 0;
    int t = 0;
    double accuracy = 0;
    std::vector<double> epsilon;   // per PCoder, may be empty
    std::vector<HyperParams> hps;  // one (shared) or one per PCoder, may be empty
};

/// First line "# config_hash=<hex> experiment=<id>", then the header
///   experiment,regime,mask,noise,level,restart,t,accuracy,eps_1..eps_L,
///   mu,gamma,beta,alpha (suffixed _1.._L for separate hyper-parameters)
/// with L and the hyper-parameter count taken as the maximum over records;
/// missing cells are empty. Throws if an accuracy is outside [0,1].
std::string metrics_csv(const std::vector<MetricsRecord>& records, const std::string& config_hash,
                        const std::string& experiment);

/// Best-restart hyper-parameters learned under one condition.
struct HPSummary {
    std::string mask = "full";
    NoiseKind kind = NoiseKind::clean;
    int level = 0;
    std::vector<HyperParams> hps;
};

struct RelativeHPRow {
    std::string mask;
    NoiseKind kind = NoiseKind::clean;
    int level = 0;
    std::size_t set = 0;  // hyper-parameter set (PCoder in separate mode)
    std::string name;     // mu, gamma, beta, alpha
    double value = 0;
    double clean = 0;
    double relative = 0;  // value / clean; NaN when clean is 0
};

/// Each hyper-parameter divided by the same mask's clean-condition value.
/// Level-0 entries of any kind count as the clean condition. Rows come in
/// the order of `summaries` (non-clean kinds get level 0 = clean rows as
/// well), so a full grid gives kinds x levels x 4 x sets rows per mask.
/// Throws std::invalid_argument naming the mask without a clean entry.
std::vector<RelativeHPRow> relative_hp_table(const std::vector<HPSummary>& summaries);
/// Columns: mask,noise,level,set,hp,value,clean,relative
std::string relative_hp_csv(const std::vector<RelativeHPRow>& rows);

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

struct ChartPanel {
    std::string title;
    std::string x_label;
    std::string y_label;
    std::vector<Series> series;
};

/// Side-by-side line-chart panels with a shared legend. Non-finite points
/// are skipped.
std::string svg_line_chart(const std::string& title, const std::vector<ChartPanel>& panels);

}  // namespace PCNET_PRECISION_NS
}  // namespace pcnet
