#ifndef WINDSCALE_MODEL_CONFIG_HPP
#define WINDSCALE_MODEL_CONFIG_HPP

#include <fstream>
#include <string>

#include "json.hpp"
#include "windscale/nn.hpp"

namespace windscale {

// JSON model-config sidecars: every width/depth/kernel knob is persisted next
// to the WTS1 checkpoint so inference can rebuild the exact architecture.

inline void strict_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                        const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ArgError("unknown key '" + it.key() + "' in " + where);
    }
}

inline nlohmann::json to_json(const SimVPConfig& c) {
    return {{"t_in", c.t_in},
            {"c_in", c.c_in},
            {"c_out", c.c_out},
            {"factor", c.factor},
            {"enc_width", c.enc_width},
            {"enc_depth", c.enc_depth},
            {"lat_width", c.lat_width},
            {"tau_blocks", c.tau_blocks},
            {"tau_kernel", c.tau_kernel},
            {"tau_dilation", c.tau_dilation},
            {"tau_bottleneck", c.tau_bottleneck},
            {"dec_width", c.dec_width},
            {"gn_groups", c.gn_groups}};
}

inline SimVPConfig simvp_from_json(const nlohmann::json& j) {
    strict_keys(j,
                {"t_in", "c_in", "c_out", "factor", "enc_width", "enc_depth", "lat_width",
                 "tau_blocks", "tau_kernel", "tau_dilation", "tau_bottleneck", "dec_width",
                 "gn_groups"},
                "mean model config");
    SimVPConfig c;
    c.t_in = j.value("t_in", c.t_in);
    c.c_in = j.value("c_in", c.c_in);
    c.c_out = j.value("c_out", c.c_out);
    c.factor = j.value("factor", c.factor);
    c.enc_width = j.value("enc_width", c.enc_width);
    c.enc_depth = j.value("enc_depth", c.enc_depth);
    c.lat_width = j.value("lat_width", c.lat_width);
    c.tau_blocks = j.value("tau_blocks", c.tau_blocks);
    c.tau_kernel = j.value("tau_kernel", c.tau_kernel);
    c.tau_dilation = j.value("tau_dilation", c.tau_dilation);
    c.tau_bottleneck = j.value("tau_bottleneck", c.tau_bottleneck);
    c.dec_width = j.value("dec_width", c.dec_width);
    c.gn_groups = j.value("gn_groups", c.gn_groups);
    c.validate();
    return c;
}

inline nlohmann::json to_json(const DenoiserConfig& c) {
    return {{"c_res", c.c_res},       {"c_cond", c.c_cond},
            {"width", c.width},       {"depth", c.depth},
            {"emb", c.emb},           {"gn_groups", c.gn_groups},
            {"rdb_growth", c.rdb_growth}, {"cau_bottleneck", c.cau_bottleneck}};
}

inline DenoiserConfig denoiser_from_json(const nlohmann::json& j) {
    strict_keys(j, {"c_res", "c_cond", "width", "depth", "emb", "gn_groups", "rdb_growth",
                    "cau_bottleneck"},
                "denoiser config");
    DenoiserConfig c;
    c.c_res = j.value("c_res", c.c_res);
    c.c_cond = j.value("c_cond", c.c_cond);
    c.width = j.value("width", c.width);
    c.depth = j.value("depth", c.depth);
    c.emb = j.value("emb", c.emb);
    c.gn_groups = j.value("gn_groups", c.gn_groups);
    c.rdb_growth = j.value("rdb_growth", c.rdb_growth);
    c.cau_bottleneck = j.value("cau_bottleneck", c.cau_bottleneck);
    c.validate();
    return c;
}

inline void save_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    os << j.dump(2) << "\n";
}

inline nlohmann::json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open '" + path + "'");
    return nlohmann::json::parse(is);
}

}  // namespace windscale

#endif
