#pragma once

#include "plumeseg/checkpoint.hpp"
#include "plumeseg/evaluation.hpp"
#include "plumeseg/gradcheck.hpp"

namespace plumeseg {

struct TrainConfig {
    TrainHyper hyper;
    LossKind loss = LossKind::BCE;
    bool drop_highest = false;
    int drop_k = 1;  // samples zeroed per batch when drop_highest is on
    BandMode band_mode = BandMode::OneBand;
    std::uint64_t seed = 0;
    int start_epoch = 0;             // resume point; lr schedule uses absolute epochs
    int checkpoint_every = 7;        // epochs; 0 disables the schedule
    std::string checkpoint_dir;      // empty -> no checkpoints written
    NormStats norm = NormStats::defaults();
    double eval_threshold = 0.5;

    void validate(const UNetConfig& model_cfg) const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0, val_loss = 0.0;
    double train_dice = 0.0, val_dice = 0.0;
    double lr = 0.0;
    std::vector<std::string> dropped_sample_ids;
};

/// Zeroes the highest entry (ties -> lowest index) and returns
/// (sum of the rest / full batch size, dropped index).
std::pair<double, int> drop_highest_loss(const std::vector<double>& per_sample_losses);

/// Mean loss and mean Dice (at `threshold`) of the frozen model over samples.
std::pair<double, double> validate(UNet<float>& model, const std::vector<Sample>& samples,
                                   const TrainConfig& cfg, double threshold = 0.5);

/// Full training loop per the noisy-label protocol; model must be initialized.
/// Early-stop hook: when stop_at_train_dice > 0, training ends after the
/// first epoch whose train_dice reaches it.
std::vector<EpochRecord> train(UNet<float>& model, const std::vector<Sample>& train_set,
                               const std::vector<Sample>& val_set, const TrainConfig& cfg,
                               double stop_at_train_dice = 0.0);

/// CSV with columns epoch,train_loss,val_loss,train_dice,val_dice,lr.
void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path);

}  // namespace plumeseg
