#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gtee/evalmetrics.hpp"
#include "gtee/model.hpp"

namespace gtee {

struct TrainConfig {
    double learning_rate = 3e-4;
    double weight_decay = 1e-5;
    double grad_clip_norm = 5.0;
    double warmup_ratio = 0.1;
    std::size_t epochs = 20;
    std::size_t batch_size = 16;
    std::uint64_t seed = 13;
    double neg_sample_rate = 0.04;
    std::size_t dev_beam = 1;  // beam used when scoring dev each epoch
    double dropout = 0.0;      // LM dropout while training phi

    void validate() const;

    // Desk-scale defaults per stage (1, 2, 3).
    static TrainConfig desk(int stage);
    // Large-model reference setting; stage 1 is Base, stages 2/3 the prefix column.
    static TrainConfig reference(int stage);
};

nlohmann::ordered_json to_json(const TrainConfig& c);

// Keeps every positive and floor(rate * #negatives) negatives chosen uniformly
// without replacement; relative order is preserved.
std::vector<TrainingInstance> sample_negatives(const std::vector<TrainingInstance>& instances, double rate,
                                               std::uint64_t seed);

// Mean token NLL of one instance under the given prefix mode (static: mask =
// the instance's type; dynamic: no mask).
Tensor instance_nll(const GteeModel& model, const EncodedInstance& inst, PrefixMode mode);
// Mean of per-instance losses.
Tensor nll_loss(const GteeModel& model, std::span<const EncodedInstance> batch, PrefixMode mode);

// Linear warm-up from 0 to `peak` over warmup_ratio * total steps, then linear decay to 0.
double learning_rate_at(std::size_t step, std::size_t total_steps, double peak, double warmup_ratio);

// Scales all gradients so their global L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(const nn::ParamList& params, double max_norm);

class AdamW {
   public:
    AdamW(nn::ParamList params, double weight_decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void zero_grad();
    // Clips to clip_norm (if > 0) and applies one update. Non-finite gradients
    // skip the update and return false.
    bool step(double lr, double clip_norm);

    std::size_t steps() const { return t_; }
    std::size_t skipped() const { return skipped_; }
    const nn::ParamList& params() const { return params_; }

   private:
    nn::ParamList params_;
    std::vector<std::vector<double>> m_, v_;
    double weight_decay_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::size_t skipped_ = 0;
};

struct EpochLog {
    std::size_t epoch = 0;
    std::string split;
    double loss = 0.0;
    bool scored = false;
    ScoreReport score;
};

struct StageResult {
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;
    ScoreReport best_dev;
    std::size_t skipped_steps = 0;
    std::size_t steps = 0;
};

inline constexpr const char* kTrainLogHeader = "epoch,split,loss,trg_p,trg_r,trg_f1,arg_p,arg_r,arg_f1";
std::string log_row(const EpochLog& row);

// Replaces theta with a freshly initialized prefix module.
void reset_prefix(GteeModel& model, PrefixConfig config, std::uint64_t seed);

// Stage 1 trains phi with no prefix; stage 2 trains theta with the one-type
// mask (phi frozen); stage 3 trains theta without the mask (phi frozen).
// Stage 2 needs a stage-1 model, stage 3 a stage-2 model. The dev split picks
// the epoch (best Arg-C F1, then Trg-C F1, then the earlier epoch) whose
// parameters are kept. `csv`, if given, receives kTrainLogHeader rows.
StageResult train_stage(int stage, GteeModel& model, const Dataset& train, const Dataset& dev, const TrainConfig& config,
                        std::ostream* csv = nullptr);

PrefixMode stage_mode(int stage);

// Denoising warm-up of phi on raw contexts: each input has a `mask_rate`
// fraction of its tokens replaced by <unk> and the target is the clean
// context. Theta stays frozen. Returns the mean loss of each epoch.
TrainConfig pretrain_desk_config();
std::vector<double> pretrain_denoise(GteeModel& model, const Dataset& contexts, const TrainConfig& config,
                                     double mask_rate = 0.15);

// Dev scoring over (context, type) subtasks: counts are summed per subtask.
ScoreReport score_subtasks(const GteeModel& model, const std::vector<EncodedInstance>& subtasks, const Dataset& data,
                           PrefixMode mode, std::size_t beam);

}  // namespace gtee
