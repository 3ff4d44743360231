#include "windscale/diag.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace windscale {

namespace {

constexpr double kTinyPower = 1e-300;

std::pair<int, int> uv_channels(const FieldSequence& seq) {
    const int iu = seq.meta.channel_index("u"), iv = seq.meta.channel_index("v");
    if (iu < 0 || iv < 0) throw ArgError("diagnostics: sequence must carry u and v channels");
    return {iu, iv};
}

Tensor64 vort_frame(const FieldSequence& seq, std::size_t t, int iu, int iv) {
    WindField f;
    f.u = seq.frame(t, std::size_t(iu));
    f.v = seq.frame(t, std::size_t(iv));
    f.d_lat = seq.meta.d_lat;
    f.d_lon = seq.meta.d_lon;
    return vorticity(f);
}

struct DSU {
    std::vector<std::size_t> parent;
    explicit DSU(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

struct Component {
    std::size_t area = 0;
    double peak = 0;
    double sin_i = 0, cos_i = 0, sin_j = 0, cos_j = 0;
    double ci = 0, cj = 0;  // periodic centroid
};

double wrap_dist(double a, double b, double n) {
    const double d = std::fabs(a - b);
    return std::min(d, n - d);
}

std::vector<Component> components_at(const Tensor64& vort, const StormParams& p) {
    const std::size_t H = vort.shape[0], W = vort.shape[1];
    std::vector<char> mask(H * W, 0);
    for (std::size_t i = 0; i < H * W; ++i) mask[i] = std::fabs(vort.data[i]) >= p.tau;
    DSU dsu(H * W);
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            if (!mask[i * W + j]) continue;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    if (di == 0 && dj == 0) continue;
                    const std::size_t ni = (i + std::size_t(di + int(H))) % H;
                    const std::size_t nj = (j + std::size_t(dj + int(W))) % W;
                    if (mask[ni * W + nj]) dsu.unite(i * W + j, ni * W + nj);
                }
        }
    std::vector<int> label(H * W, -1);
    std::vector<Component> comps;
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            const std::size_t idx = i * W + j;
            if (!mask[idx]) continue;
            const std::size_t root = dsu.find(idx);
            if (label[root] < 0) {
                label[root] = int(comps.size());
                comps.emplace_back();
            }
            Component& c = comps[std::size_t(label[root])];
            ++c.area;
            c.peak = std::max(c.peak, std::fabs(vort.data[idx]));
            const double ti = 2 * M_PI * double(i) / double(H);
            const double tj = 2 * M_PI * double(j) / double(W);
            c.sin_i += std::sin(ti);
            c.cos_i += std::cos(ti);
            c.sin_j += std::sin(tj);
            c.cos_j += std::cos(tj);
        }
    std::vector<Component> kept;
    for (auto& c : comps) {
        if (c.area < p.a_min) continue;
        c.ci = std::atan2(c.sin_i, c.cos_i) / (2 * M_PI) * double(H);
        c.cj = std::atan2(c.sin_j, c.cos_j) / (2 * M_PI) * double(W);
        if (c.ci < 0) c.ci += double(H);
        if (c.cj < 0) c.cj += double(W);
        kept.push_back(c);
    }
    // stable order for deterministic linking
    std::sort(kept.begin(), kept.end(), [](const Component& a, const Component& b) {
        return a.ci != b.ci ? a.ci < b.ci : a.cj < b.cj;
    });
    return kept;
}

double clamped_log_ratio(double a, double b) {
    return std::log(std::max(a, kTinyPower)) - std::log(std::max(b, kTinyPower));
}

SpatialSpectrum mean_spatial_spectrum(const FieldSequence& seq, int iu, int iv) {
    SpatialSpectrum acc;
    std::size_t n = 0;
    for (std::size_t t = 0; t < seq.steps(); ++t)
        for (int c : {iu, iv}) {
            auto s = radial_spectrum(seq.frame(t, std::size_t(c)));
            if (acc.k.empty()) {
                acc = s;
            } else {
                for (std::size_t i = 0; i < s.power.size(); ++i) acc.power[i] += s.power[i];
                acc.variance += s.variance;
            }
            ++n;
        }
    for (auto& p : acc.power) p /= double(n);
    acc.variance /= double(n);
    return acc;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

/// Minimal log-log capable line plot; two series, fixed palette.
void write_svg_plot(const std::string& path, const std::vector<double>& xs,
                    const std::vector<std::vector<double>>& series,
                    const std::vector<std::string>& names, bool logx, bool logy,
                    const std::string& title) {
    const double Wpx = 640, Hpx = 480, m = 50;
    auto txf = [&](double v, bool lg) { return lg ? std::log10(std::max(v, kTinyPower)) : v; };
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (double x : xs) {
        xmin = std::min(xmin, txf(x, logx));
        xmax = std::max(xmax, txf(x, logx));
    }
    for (const auto& s : series)
        for (double y : s) {
            ymin = std::min(ymin, txf(y, logy));
            ymax = std::max(ymax, txf(y, logy));
        }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Wpx << "\" height=\"" << Hpx
       << "\">\n";
    os << "<rect x=\"0\" y=\"0\" width=\"" << Wpx << "\" height=\"" << Hpx
       << "\" fill=\"white\" stroke=\"black\"/>\n";
    os << "<text x=\"" << m << "\" y=\"25\" font-size=\"14\">" << title << "</text>\n";
    const char* colors[] = {"crimson", "steelblue", "seagreen", "darkorange"};
    for (std::size_t s = 0; s < series.size(); ++s) {
        os << "<polyline fill=\"none\" stroke=\"" << colors[s % 4] << "\" points=\"";
        for (std::size_t i = 0; i < xs.size() && i < series[s].size(); ++i) {
            const double px = m + (txf(xs[i], logx) - xmin) / (xmax - xmin) * (Wpx - 2 * m);
            const double py = Hpx - m - (txf(series[s][i], logy) - ymin) / (ymax - ymin) *
                                            (Hpx - 2 * m);
            os << fmt(px) << "," << fmt(py) << " ";
        }
        os << "\"/>\n";
        os << "<text x=\"" << (Wpx - m - 120) << "\" y=\"" << (40 + 18 * double(s))
           << "\" font-size=\"12\" fill=\"" << colors[s % 4] << "\">" << names[s] << "</text>\n";
    }
    os << "</svg>\n";
    if (!os) throw FormatError("write failed for '" + path + "'");
}

}  // namespace

Histogram vorticity_pdf(const FieldSequence& seq, std::size_t bins, double lo, double hi) {
    seq.validate();
    if (seq.steps() == 0) throw ArgError("vorticity_pdf: empty sequence");
    if (bins < 1) throw ArgError("vorticity_pdf: bins must be >= 1");
    auto [iu, iv] = uv_channels(seq);
    std::vector<double> vals;
    vals.reserve(seq.steps() * seq.meta.n_lat * seq.meta.n_lon);
    for (std::size_t t = 0; t < seq.steps(); ++t) {
        auto z = vort_frame(seq, t, iu, iv);
        vals.insert(vals.end(), z.data.begin(), z.data.end());
    }
    if (lo == hi) {
        lo = *std::min_element(vals.begin(), vals.end());
        hi = *std::max_element(vals.begin(), vals.end());
        if (lo == hi) {
            lo -= 0.5;
            hi += 0.5;
        }
    }
    if (hi <= lo) throw ArgError("vorticity_pdf: empty value range");
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b)
        h.edges[b] = lo + (hi - lo) * double(b) / double(bins);
    h.mass.assign(bins, 0.0);
    const double inv = 1.0 / double(vals.size());
    for (double v : vals) {
        double f = (v - lo) / (hi - lo) * double(bins);
        std::size_t b = f <= 0 ? 0 : std::min(bins - 1, std::size_t(f));
        h.mass[b] += inv;
    }
    return h;
}

std::vector<StormEvent> storm_track(const FieldSequence& seq, const StormParams& p) {
    seq.validate();
    p.validate();
    auto [iu, iv] = uv_channels(seq);
    if (seq.steps() < p.p_min) return {};
    const double H = double(seq.meta.n_lat), W = double(seq.meta.n_lon);

    struct Track {
        std::size_t birth = 0, last = 0;
        double peak = 0;
        double ci = 0, cj = 0;
        std::vector<std::pair<double, double>> path;
    };
    std::vector<Track> tracks;
    for (std::size_t t = 0; t < seq.steps(); ++t) {
        auto comps = components_at(vort_frame(seq, t, iu, iv), p);
        // candidate links: (distance, track, component), nearest first
        struct Cand {
            double d;
            std::size_t tr, co;
        };
        std::vector<Cand> cands;
        for (std::size_t tr = 0; tr < tracks.size(); ++tr) {
            if (t == 0 || tracks[tr].last != t - 1) continue;
            for (std::size_t co = 0; co < comps.size(); ++co) {
                const double d = std::hypot(wrap_dist(tracks[tr].ci, comps[co].ci, H),
                                            wrap_dist(tracks[tr].cj, comps[co].cj, W));
                if (d <= p.r_max) cands.push_back({d, tr, co});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.d != b.d) return a.d < b.d;
            if (a.tr != b.tr) return a.tr < b.tr;
            return a.co < b.co;
        });
        std::vector<char> track_used(tracks.size(), 0), comp_used(comps.size(), 0);
        for (const auto& c : cands) {
            if (track_used[c.tr] || comp_used[c.co]) continue;
            track_used[c.tr] = comp_used[c.co] = 1;
            Track& tr = tracks[c.tr];
            tr.last = t;
            tr.ci = comps[c.co].ci;
            tr.cj = comps[c.co].cj;
            tr.peak = std::max(tr.peak, comps[c.co].peak);
            tr.path.emplace_back(comps[c.co].ci, comps[c.co].cj);
        }
        for (std::size_t co = 0; co < comps.size(); ++co) {
            if (comp_used[co]) continue;
            Track tr;
            tr.birth = tr.last = t;
            tr.ci = comps[co].ci;
            tr.cj = comps[co].cj;
            tr.peak = comps[co].peak;
            tr.path.emplace_back(comps[co].ci, comps[co].cj);
            tracks.push_back(std::move(tr));
        }
    }
    std::vector<StormEvent> events;
    for (const auto& tr : tracks) {
        const std::size_t life = tr.last - tr.birth + 1;
        if (life < p.p_min) continue;
        StormEvent e;
        e.birth_step = tr.birth;
        e.lifetime = life;
        e.peak_vorticity = tr.peak;
        e.track = tr.path;
        events.push_back(std::move(e));
    }
    return events;
}

std::size_t storm_count(const FieldSequence& seq, const StormParams& p) {
    return storm_track(seq, p).size();
}

double wasserstein1(const Histogram& a, const Histogram& b) {
    if (a.edges != b.edges) throw ArgError("wasserstein1: histograms must share binning");
    double w = 0, ca = 0, cb = 0;
    for (std::size_t i = 0; i < a.mass.size(); ++i) {
        ca += a.mass[i];
        cb += b.mass[i];
        w += std::fabs(ca - cb) * (a.edges[i + 1] - a.edges[i]);
    }
    return w;
}

ScoreCard spectral_scorecard(const FieldSequence& pred, const FieldSequence& truth,
                             const std::vector<std::pair<std::size_t, std::size_t>>& locations,
                             const std::vector<std::pair<std::size_t, std::size_t>>& bands,
                             const StormParams& storm_params, std::size_t pdf_bins,
                             std::size_t segment_len) {
    pred.validate();
    truth.validate();
    if (pred.meta.n_lat != truth.meta.n_lat || pred.meta.n_lon != truth.meta.n_lon ||
        pred.steps() != truth.steps())
        throw ShapeError("spectral_scorecard: prediction and truth grids must match");
    auto [pu, pv] = uv_channels(pred);
    auto [tu, tv] = uv_channels(truth);

    ScoreCard card;
    card.storm_params = storm_params;
    card.spatial_pred = mean_spatial_spectrum(pred, pu, pv);
    card.spatial_truth = mean_spatial_spectrum(truth, tu, tv);
    for (auto [lo, hi] : bands) {
        BandScore bs;
        bs.k_lo = lo;
        bs.k_hi = hi;
        double sum = 0;
        for (std::size_t i = 0; i < card.spatial_pred.k.size(); ++i) {
            const std::size_t k = card.spatial_pred.k[i];
            if (k < lo || k > hi) continue;
            sum += clamped_log_ratio(card.spatial_pred.power[i], card.spatial_truth.power[i]);
        }
        bs.distance = std::fabs(sum);
        bs.underrepresents = sum < 0;
        card.bands.push_back(bs);
    }

    if (!locations.empty()) {
        const std::size_t T = truth.steps();
        std::size_t L = segment_len;
        if (L == 0) {
            L = 8;
            while (L * 4 <= T) L *= 2;
            L /= 2;
            if (L < 8) throw ArgError("spectral_scorecard: sequence too short for temporal spectra");
        }
        for (auto [i, j] : locations) {
            if (i >= truth.meta.n_lat || j >= truth.meta.n_lon)
                throw ArgError("spectral_scorecard: location out of grid");
            auto series = [&](const FieldSequence& s, int c) {
                std::vector<double> x(T);
                for (std::size_t t = 0; t < T; ++t) x[t] = s.data.at4(t, std::size_t(c), i, j);
                return x;
            };
            auto sp = temporal_spectrum(series(pred, pu), L);
            auto st = temporal_spectrum(series(truth, tu), L);
            double sum = 0;
            for (std::size_t b = 0; b < sp.power.size(); ++b)
                sum += clamped_log_ratio(sp.power[b], st.power[b]);
            LocationScore ls;
            ls.i = i;
            ls.j = j;
            ls.distance = std::fabs(sum) / double(L);  // df = 1/L
            card.locations.push_back(ls);
            card.temporal_pred.push_back(std::move(sp));
            card.temporal_truth.push_back(std::move(st));
        }
    }

    // vorticity PDFs over a shared range
    {
        auto pa = vorticity_pdf(pred, pdf_bins);
        auto pb = vorticity_pdf(truth, pdf_bins);
        const double lo = std::min(pa.edges.front(), pb.edges.front());
        const double hi = std::max(pa.edges.back(), pb.edges.back());
        card.pdf_pred = vorticity_pdf(pred, pdf_bins, lo, hi);
        card.pdf_truth = vorticity_pdf(truth, pdf_bins, lo, hi);
        card.vorticity_w1 = wasserstein1(card.pdf_pred, card.pdf_truth);
    }

    card.events_pred = storm_track(pred, storm_params);
    card.events_truth = storm_track(truth, storm_params);
    card.storms_pred = card.events_pred.size();
    card.storms_truth = card.events_truth.size();
    return card;
}

void emit_report(const ScoreCard& card, const std::string& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw FormatError("cannot create report directory '" + out_dir + "'");
    auto open = [&](const std::string& name) {
        std::ofstream os(out_dir + "/" + name, std::ios::trunc);
        if (!os) throw FormatError("cannot open '" + out_dir + "/" + name + "' for writing");
        return os;
    };
    {
        auto os = open("scorecard.csv");
        os << "metric,name,value,flag\n";
        for (const auto& b : card.bands)
            os << "band_log_spectral_distance,k" << b.k_lo << "_" << b.k_hi << ","
               << fmt(b.distance) << "," << (b.underrepresents ? "underrepresents" : "") << "\n";
        for (const auto& l : card.locations)
            os << "temporal_log_spectral_distance," << l.i << "_" << l.j << ","
               << fmt(l.distance) << ",\n";
        os << "vorticity_wasserstein1,all," << fmt(card.vorticity_w1) << ",\n";
        os << "storm_count,pred," << card.storms_pred << ",\n";
        os << "storm_count,truth," << card.storms_truth << ",\n";
        os << "storm_param,tau," << fmt(card.storm_params.tau) << ",\n";
        os << "storm_param,a_min," << card.storm_params.a_min << ",\n";
        os << "storm_param,p_min," << card.storm_params.p_min << ",\n";
        os << "storm_param,r_max," << fmt(card.storm_params.r_max) << ",\n";
    }
    {
        auto os = open("spatial_spectrum.csv");
        os << "bin,pred,truth\n";
        for (std::size_t i = 0; i < card.spatial_pred.k.size(); ++i)
            os << card.spatial_pred.k[i] << "," << fmt(card.spatial_pred.power[i]) << ","
               << fmt(card.spatial_truth.power[i]) << "\n";
        std::vector<double> xs(card.spatial_pred.k.begin(), card.spatial_pred.k.end());
        write_svg_plot(out_dir + "/spatial_spectrum.svg", xs,
                       {card.spatial_pred.power, card.spatial_truth.power}, {"pred", "truth"},
                       true, true, "radial power spectrum");
    }
    for (std::size_t n = 0; n < card.locations.size(); ++n) {
        const auto& l = card.locations[n];
        const std::string stem =
            "temporal_spectrum_" + std::to_string(l.i) + "_" + std::to_string(l.j);
        auto os = open(stem + ".csv");
        os << "freq,pred,truth\n";
        const auto& sp = card.temporal_pred[n];
        const auto& st = card.temporal_truth[n];
        for (std::size_t i = 0; i < sp.freq.size(); ++i)
            os << fmt(sp.freq[i]) << "," << fmt(sp.power[i]) << "," << fmt(st.power[i]) << "\n";
        std::vector<double> xs(sp.freq.begin() + 1, sp.freq.end());
        write_svg_plot(out_dir + "/" + stem + ".svg", xs,
                       {{sp.power.begin() + 1, sp.power.end()},
                        {st.power.begin() + 1, st.power.end()}},
                       {"pred", "truth"}, true, true, "temporal power spectrum");
    }
    {
        auto os = open("vorticity_pdf.csv");
        os << "bin_lo,bin_hi,pred,truth\n";
        std::vector<double> centers;
        for (std::size_t b = 0; b < card.pdf_pred.mass.size(); ++b) {
            os << fmt(card.pdf_pred.edges[b]) << "," << fmt(card.pdf_pred.edges[b + 1]) << ","
               << fmt(card.pdf_pred.mass[b]) << "," << fmt(card.pdf_truth.mass[b]) << "\n";
            centers.push_back(0.5 * (card.pdf_pred.edges[b] + card.pdf_pred.edges[b + 1]));
        }
        write_svg_plot(out_dir + "/vorticity_pdf.svg", centers,
                       {card.pdf_pred.mass, card.pdf_truth.mass}, {"pred", "truth"}, false,
                       false, "vorticity distribution");
    }
    {
        auto os = open("storms.csv");
        os << "field,event,birth_step,lifetime,peak_vorticity\n";
        for (std::size_t n = 0; n < card.events_pred.size(); ++n)
            os << "pred," << n << "," << card.events_pred[n].birth_step << ","
               << card.events_pred[n].lifetime << "," << fmt(card.events_pred[n].peak_vorticity)
               << "\n";
        for (std::size_t n = 0; n < card.events_truth.size(); ++n)
            os << "truth," << n << "," << card.events_truth[n].birth_step << ","
               << card.events_truth[n].lifetime << ","
               << fmt(card.events_truth[n].peak_vorticity) << "\n";
    }
}

}  // namespace windscale
