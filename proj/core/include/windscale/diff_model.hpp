#ifndef WINDSCALE_DIFF_MODEL_HPP
#define WINDSCALE_DIFF_MODEL_HPP

#include <string>
#include <vector>

#include "windscale/data.hpp"
#include "windscale/edm.hpp"

namespace windscale {

// ---------------------------------------------------------------------------
// Score-matching training for the correction denoiser and whole-sequence
// reverse-diffusion sampling.
// ---------------------------------------------------------------------------

struct DiffTrainConfig {
    int epochs = 1;
    std::size_t batch = 4;
    double lr = 1e-3;
    double sigma_data = 1.0;
    std::uint64_t seed = 0;
    std::size_t steps_per_epoch = 0;  // batches per epoch; 0 runs the full set
    std::string checkpoint_path;      // written after every epoch; empty disables

    void validate() const {
        if (epochs < 1) throw ArgError("DiffTrainConfig: epochs must be >= 1");
        if (batch < 1) throw ArgError("DiffTrainConfig: batch must be >= 1");
        if (lr < 0.0) throw ArgError("DiffTrainConfig: lr must be >= 0");
        if (sigma_data <= 0.0) throw ArgError("DiffTrainConfig: sigma_data must be > 0");
    }
};

struct DiffStepLog {
    std::size_t epoch = 0;
    double loss = 0;  // batch-mean weighted score-matching loss
};

struct DiffTrainLog {
    std::vector<DiffStepLog> steps;
    std::vector<double> epoch_seconds;
};

/// Minibatch Adam on the weighted denoising loss over (target, conditioning)
/// frame pairs; noise levels are drawn log-normally per sample. Deterministic
/// per seed.
DiffTrainLog train_denoiser(const std::vector<Tensor32>& targets,
                            const std::vector<Tensor32>& conds, ParamStore32& ps,
                            const DenoiserConfig& dcfg, const DiffTrainConfig& cfg);

/// Pooled per-value standard deviation of a frame list; the usual
/// sigma_data estimate.
double frames_std(const std::vector<Tensor32>& frames);

/// One deterministic reverse-diffusion draw per conditioning frame; output
/// carries u, v on the conditioning grid. Frame seeds derive from (seed,
/// member, step), so members and reruns are independent and reproducible.
FieldSequence sample_fields(ParamStore32& ps, const DenoiserConfig& dcfg,
                            const Preconditioner& prec, const NoiseSchedule& sched,
                            const FieldSequence& cond, std::uint64_t seed, std::uint64_t member,
                            std::size_t n_threads = 1);

void write_diff_log_csv(const DiffTrainLog& log, const std::string& path);
void write_diff_epoch_csv(const DiffTrainLog& log, const std::string& path);

}  // namespace windscale

#endif
