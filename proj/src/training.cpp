#include "plumeseg/training.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace plumeseg {

namespace {

struct Batch {
    Tensor4<float> x, y;
    std::vector<const Sample*> members;
};

Batch assemble(const std::vector<const Sample*>& members, const TrainConfig& cfg) {
    const int h = members.front()->scene.height;
    const int w = members.front()->scene.width;
    const int c = band_mode_plane_count(cfg.band_mode);
    Batch b;
    b.members = members;
    b.x = Tensor4<float>(static_cast<int>(members.size()), c, h, w);
    b.y = Tensor4<float>(static_cast<int>(members.size()), 1, h, w);
    const std::int64_t xs = static_cast<std::int64_t>(c) * h * w;
    const std::int64_t ys = static_cast<std::int64_t>(h) * w;
    for (size_t s = 0; s < members.size(); ++s) {
        const Sample& raw = *members[s];
        if (raw.scene.height != h || raw.scene.width != w)
            throw ShapeError("train: mixed crop sizes in one batch");
        const Sample norm = normalize(raw, cfg.norm);
        const Tensor4<float> xi = input_tensor(norm.scene, cfg.band_mode);
        const Tensor4<float> yi = label_tensor(raw.label);
        std::copy(xi.v.begin(), xi.v.end(), b.x.v.begin() + static_cast<std::ptrdiff_t>(s) * xs);
        std::copy(yi.v.begin(), yi.v.end(), b.y.v.begin() + static_cast<std::ptrdiff_t>(s) * ys);
    }
    return b;
}

VecX<float> loss_per_sample(LossKind kind, const Tensor4<float>& prob, const Tensor4<float>& y) {
    return kind == LossKind::BCE ? bce_per_sample(prob, y) : mae_per_sample(prob, y);
}

Tensor4<float> loss_backward(LossKind kind, const Tensor4<float>& prob, const Tensor4<float>& y,
                             const VecX<float>& weights) {
    return kind == LossKind::BCE ? bce_backward(prob, y, weights)
                                 : mae_backward(prob, y, weights);
}

}  // namespace

void TrainConfig::validate(const UNetConfig& model_cfg) const {
    hyper.validate();
    if (band_mode_plane_count(band_mode) != model_cfg.in_channels)
        throw ConfigError("band mode supplies " +
                          std::to_string(band_mode_plane_count(band_mode)) +
                          " planes but the model expects " +
                          std::to_string(model_cfg.in_channels));
    if (drop_k < 1) throw ConfigError("drop_k must be >= 1");
    if (!(eval_threshold > 0.0 && eval_threshold < 1.0))
        throw ConfigError("eval_threshold must lie in (0,1)");
    norm.validate();
}

std::pair<double, int> drop_highest_loss(const std::vector<double>& per_sample_losses) {
    if (per_sample_losses.empty()) throw EmptyError("drop_highest_loss: empty batch");
    int drop = 0;
    for (size_t i = 1; i < per_sample_losses.size(); ++i)
        if (per_sample_losses[i] > per_sample_losses[drop]) drop = static_cast<int>(i);
    double sum = 0.0;
    for (size_t i = 0; i < per_sample_losses.size(); ++i)
        if (static_cast<int>(i) != drop) sum += per_sample_losses[i];
    return {sum / static_cast<double>(per_sample_losses.size()), drop};
}

std::pair<double, double> validate(UNet<float>& model, const std::vector<Sample>& samples,
                                   const TrainConfig& cfg, double threshold_t) {
    if (samples.empty()) throw EmptyError("validate: no samples");
    double loss_acc = 0.0, dice_acc = 0.0;
    for (const Sample& s : samples) {
        const Batch b = assemble({&s}, cfg);
        const Tensor4<float> prob = model.forward_padded(b.x);
        loss_acc += loss_per_sample(cfg.loss, prob, b.y)[0];

        ProbMap p;
        p.width = prob.w;
        p.height = prob.h;
        p.values = PlaneF(prob.h, prob.w);
        for (int i = 0; i < prob.h; ++i)
            for (int j = 0; j < prob.w; ++j) p.values(i, j) = prob.at(0, 0, i, j);
        p.transform = s.label.transform;
        dice_acc += dice(threshold(p, threshold_t), s.label);
    }
    const double n = static_cast<double>(samples.size());
    return {loss_acc / n, dice_acc / n};
}

std::vector<EpochRecord> train(UNet<float>& model, const std::vector<Sample>& train_set,
                               const std::vector<Sample>& val_set, const TrainConfig& cfg,
                               double stop_at_train_dice) {
    cfg.validate(model.config());
    if (train_set.empty() || val_set.empty())
        throw EmptyError("train: train and val splits must be non-empty");

    Rng rng(cfg.seed);
    std::vector<int> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    // Resumed runs replay the shuffles already consumed so batch order
    // matches the uninterrupted schedule.
    for (int e = 0; e < cfg.start_epoch; ++e) rng.shuffle(order.begin(), order.end());

    const bool write_ckpts = !cfg.checkpoint_dir.empty();
    if (write_ckpts) std::filesystem::create_directories(cfg.checkpoint_dir);
    auto ckpt_path = [&](int epoch) {
        return (std::filesystem::path(cfg.checkpoint_dir) /
                ("ckpt_epoch" + std::to_string(epoch) + ".bin"))
            .string();
    };

    std::vector<EpochRecord> history;
    for (int epoch = cfg.start_epoch; epoch < cfg.hyper.epochs; ++epoch) {
        const double lr = lr_at_epoch(cfg.hyper, epoch);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rng.shuffle(order.begin(), order.end());

        double loss_acc = 0.0, dice_acc = 0.0;
        for (size_t start = 0; start < order.size(); start += cfg.hyper.batch) {
            std::vector<const Sample*> members;
            for (size_t i = start; i < std::min(order.size(), start + cfg.hyper.batch); ++i)
                members.push_back(&train_set[order[i]]);
            const int b = static_cast<int>(members.size());

            const Batch batch = assemble(members, cfg);
            const Tensor4<float> prob = model.forward_padded(batch.x);
            const VecX<float> per_sample = loss_per_sample(cfg.loss, prob, batch.y);

            VecX<float> weights = VecX<float>::Constant(b, 1.0f / static_cast<float>(b));
            std::vector<bool> dropped(b, false);
            if (cfg.drop_highest) {
                std::vector<double> losses(per_sample.data(), per_sample.data() + b);
                for (int k = 0; k < std::min(cfg.drop_k, b); ++k) {
                    const int idx = drop_highest_loss(losses).second;
                    losses[idx] = -std::numeric_limits<double>::infinity();
                    weights[idx] = 0.0f;
                    dropped[idx] = true;
                    rec.dropped_sample_ids.push_back(members[idx]->id);
                }
            }

            double batch_loss = 0.0;
            for (int s = 0; s < b; ++s)
                if (!dropped[s]) batch_loss += per_sample[s];
            loss_acc += batch_loss;  // denominator applied at epoch level

            for (int s = 0; s < b; ++s) {
                ProbMap p;
                p.width = prob.w;
                p.height = prob.h;
                p.values = PlaneF(prob.h, prob.w);
                for (int i = 0; i < prob.h; ++i)
                    for (int j = 0; j < prob.w; ++j) p.values(i, j) = prob.at(s, 0, i, j);
                dice_acc += dice(threshold(p, cfg.eval_threshold), members[s]->label);
            }

            if ((weights.array() != 0.0f).any()) {
                const Tensor4<float> dprob = loss_backward(cfg.loss, prob, batch.y, weights);
                const std::vector<Tensor4<float>> grads = model.backward_padded(dprob);
                // NumericsError from non-finite gradients propagates out;
                // checkpoints already on disk are the surviving state.
                adam_step(model.state(), grads, lr, cfg.hyper);
            }
        }
        rec.train_loss = loss_acc / static_cast<double>(train_set.size());
        rec.train_dice = dice_acc / static_cast<double>(train_set.size());

        const auto [vl, vd] = validate(model, val_set, cfg, cfg.eval_threshold);
        rec.val_loss = vl;
        rec.val_dice = vd;
        history.push_back(rec);

        const bool last = epoch == cfg.hyper.epochs - 1;
        const bool scheduled =
            cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0;
        if (write_ckpts && (scheduled || last)) save_checkpoint(model, ckpt_path(epoch));

        if (stop_at_train_dice > 0.0 && rec.train_dice >= stop_at_train_dice) break;
    }
    return history;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open metrics CSV for writing: " + path);
    out << "epoch,train_loss,val_loss,train_dice,val_dice,lr\n";
    out.precision(10);
    for (const EpochRecord& r : history)
        out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << ',' << r.train_dice << ','
            << r.val_dice << ',' << r.lr << '\n';
    if (!out) throw IoError("short write on metrics CSV: " + path);
}

}  // namespace plumeseg
