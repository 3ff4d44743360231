#ifndef WINDSCALE_MEAN_MODEL_HPP
#define WINDSCALE_MEAN_MODEL_HPP

#include <functional>
#include <string>
#include <vector>

#include "windscale/data.hpp"
#include "windscale/nn.hpp"
#include "windscale/physics.hpp"

namespace windscale {

// ---------------------------------------------------------------------------
// Training and sliding-window inference for the deterministic mean model.
// ---------------------------------------------------------------------------

struct TrainConfig {
    int epochs = 10;
    std::size_t batch = 4;
    double lr = 1e-3;
    PhysicsLossWeights weights;
    std::uint64_t seed = 0;
    double val_fraction = 0.1;   // held-out tail of the pair list
    std::string checkpoint_path;  // best-by-validation-MSE weights; empty disables

    void validate() const {
        if (epochs < 1) throw ArgError("TrainConfig: epochs must be >= 1");
        if (batch < 1) throw ArgError("TrainConfig: batch must be >= 1");
        if (lr < 0.0) throw ArgError("TrainConfig: lr must be >= 0");
        if (val_fraction < 0.0 || val_fraction >= 1.0)
            throw ArgError("TrainConfig: val_fraction must be in [0, 1)");
        weights.validate();
    }
};

struct TrainStepLog {
    std::size_t epoch = 0;
    double mae = 0, mse = 0, advection = 0, vorticity = 0, divergence = 0;
    double total = 0;  // weighted recombination of the components
};

struct TrainLog {
    std::vector<TrainStepLog> steps;
    std::vector<double> epoch_seconds;
    std::vector<double> val_mse;
    std::size_t best_epoch = 0;
    double best_val_mse = 0;
};

/// Builds the graph for one input window and returns the [2,H,W] output node.
using MeanForwardFn = std::function<int(Tape<float>&, TapeBinding<float>&, const Tensor32&)>;

MeanForwardFn simvp_forward_fn(const SimVPConfig& cfg);

/// Minibatch Adam over the pair list; deterministic per seed. The validation
/// split is the tail of the list (the training set itself when the split is
/// empty); checkpoints go to cfg.checkpoint_path whenever validation MSE
/// improves.
TrainLog train_mean(const PairSet& data, ParamStore32& ps, const MeanForwardFn& fwd,
                    const TrainConfig& cfg);

/// Stride-1 sliding windows over a coarse sequence; one fine (u,v) frame per
/// window, stamped at the window's final step.
FieldSequence predict_mean(ParamStore32& ps, const SimVPConfig& mcfg, const FieldSequence& coarse);

void write_train_log_csv(const TrainLog& log, const std::string& path);
void write_epoch_log_csv(const TrainLog& log, const std::string& path);

}  // namespace windscale

#endif
