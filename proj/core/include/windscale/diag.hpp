#ifndef WINDSCALE_DIAG_HPP
#define WINDSCALE_DIAG_HPP

#include <string>
#include <utility>
#include <vector>

#include "windscale/data.hpp"
#include "windscale/physics.hpp"
#include "windscale/spectral.hpp"

namespace windscale {

// ---------------------------------------------------------------------------
// Evaluation suite: spatial/temporal spectra, vorticity distributions, storm
// counting, and report files.
// ---------------------------------------------------------------------------

struct Histogram {
    std::vector<double> edges;  // bins + 1, strictly increasing
    std::vector<double> mass;   // normalized, sums to 1
};

/// Pooled histogram of vorticity over all steps. With lo == hi the range is
/// taken from the data.
Histogram vorticity_pdf(const FieldSequence& seq, std::size_t bins, double lo = 0.0,
                        double hi = 0.0);

struct StormParams {
    double tau = 0.5;       // vorticity magnitude threshold
    std::size_t a_min = 1;  // minimum component area, cells
    std::size_t p_min = 1;  // minimum lifetime, steps
    double r_max = 1.0;     // maximum per-step centroid travel, cells

    void validate() const {
        if (tau <= 0) throw ArgError("StormParams: tau must be > 0");
        if (a_min < 1 || p_min < 1) throw ArgError("StormParams: a_min and p_min must be >= 1");
        if (r_max < 1) throw ArgError("StormParams: r_max must be >= 1");
    }
};

struct StormEvent {
    std::size_t birth_step = 0;
    std::size_t lifetime = 0;  // steps the feature stayed alive
    double peak_vorticity = 0;
    std::vector<std::pair<double, double>> track;  // (lat, lon) centroid per step
};

/// Thresholded-vorticity features linked across steps; events shorter than
/// p_min are dropped. Connectivity and centroid arithmetic are periodic.
std::vector<StormEvent> storm_track(const FieldSequence& seq, const StormParams& p);
std::size_t storm_count(const FieldSequence& seq, const StormParams& p);

struct BandScore {
    std::size_t k_lo = 0, k_hi = 0;
    double distance = 0;        // |sum over band of log(S_pred / S_truth)|
    bool underrepresents = false;  // prediction carries less band power
};

struct LocationScore {
    std::size_t i = 0, j = 0;
    double distance = 0;
};

struct ScoreCard {
    std::vector<BandScore> bands;
    std::vector<LocationScore> locations;
    double vorticity_w1 = 0;
    std::size_t storms_pred = 0, storms_truth = 0;
    StormParams storm_params;
    // raw curves backing the report plots
    SpatialSpectrum spatial_pred, spatial_truth;
    std::vector<TemporalSpectrum> temporal_pred, temporal_truth;
    Histogram pdf_pred, pdf_truth;
    std::vector<StormEvent> events_pred, events_truth;
};

/// Compares a prediction sequence against truth on the same grid. Spatial
/// spectra are averaged over steps and the u/v channels; temporal spectra use
/// the u channel at the given locations.
ScoreCard spectral_scorecard(const FieldSequence& pred, const FieldSequence& truth,
                             const std::vector<std::pair<std::size_t, std::size_t>>& locations,
                             const std::vector<std::pair<std::size_t, std::size_t>>& bands,
                             const StormParams& storm_params, std::size_t pdf_bins = 64,
                             std::size_t segment_len = 0);

/// First Wasserstein distance between two histograms on identical edges.
double wasserstein1(const Histogram& a, const Histogram& b);

/// Writes scorecard.csv, spatial_spectrum.csv/.svg,
/// temporal_spectrum_<i>_<j>.csv/.svg, vorticity_pdf.csv/.svg, storms.csv.
void emit_report(const ScoreCard& card, const std::string& out_dir);

}  // namespace windscale

#endif
