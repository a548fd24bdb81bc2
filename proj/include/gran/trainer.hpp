#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <gran/dataset.hpp>
#include <gran/model.hpp>
#include <gran/nn.hpp>
#include <gran/orderings.hpp>
#include <gran/random.hpp>

namespace gran {

struct TrainOptions {
    long steps = 200;      // optimizer steps
    int batch_size = 10;
    double lr = 1e-4;
    int val_interval = 50;  // validation every this many steps (0 = never)
    std::uint64_t seed = 0;
    std::vector<OrderingKind> orderings = {OrderingKind::dfs};
};

struct TrainLogEntry {
    long step = 0;
    double train_loss = 0;
    bool has_val = false;
    double val_loss = 0;
};

struct TrainResult {
    GranParams best;          // snapshot with the best validation loss
    GranParams last;          // final parameters (for resuming)
    AdamState adam;           // final optimizer state
    long final_step = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<TrainLogEntry> log;
};

// Minimizes the mean ordering-family loss over the training split with Adam.
// Deterministic given the seed; a non-finite loss aborts with the offending
// step in the message.
class Trainer {
public:
    Trainer(const GraphDataset& data, const DatasetSplit& split, const GranConfig& model_cfg, TrainOptions opt)
        : opt_(std::move(opt)), cfg_(model_cfg), rng_(opt_.seed), params_(model_cfg) {
        if (split.train.empty()) throw std::invalid_argument("Trainer: empty training split");
        cfg_.validate();
        params_.init(rng_);
        for (int idx : split.train) {
            const Graph& g = data.graphs.at(idx);
            train_rows_.push_back(family_rows(g, build_family(g, opt_.orderings), cfg_.n_max));
        }
        for (int idx : split.validation) {
            const Graph& g = data.graphs.at(idx);
            val_rows_.push_back(family_rows(g, build_family(g, opt_.orderings), cfg_.n_max));
        }
        adam_ = AdamState(AdamConfig{opt_.lr}, params_.parameters());
    }

    // Continue from a previous checkpoint instead of fresh parameters.
    void resume(const GranParams& saved, const AdamState& adam, long step) {
        if (saved.cfg.hidden_dim != cfg_.hidden_dim || saved.cfg.block_size != cfg_.block_size ||
            saved.cfg.n_max != cfg_.n_max || saved.cfg.rounds != cfg_.rounds)
            throw std::invalid_argument("Trainer::resume: checkpoint config does not match");
        params_ = saved;
        adam_ = adam;
        step_ = step;
    }

    TrainResult run(const std::function<void(const TrainLogEntry&)>& on_log = {}) {
        TrainResult result{params_, params_, adam_, step_};
        auto plist = params_.parameters();
        std::vector<int> order(train_rows_.size());
        std::iota(order.begin(), order.end(), 0);
        std::size_t cursor = order.size();  // force a shuffle on first use

        const long last_step = step_ + opt_.steps;
        while (step_ < last_step) {
            ++step_;

            // assemble the batch, reshuffling at epoch boundaries
            std::vector<int> batch;
            for (int b = 0; b < opt_.batch_size && b < static_cast<int>(order.size()); ++b) {
                if (cursor == order.size()) {
                    rng_.shuffle(order);
                    cursor = 0;
                }
                batch.push_back(order[cursor++]);
            }

            for (Param* p : plist) p->zero_grad();
            double loss_sum = 0;
            for (int gi : batch) {
                Tape tape;
                Tensor loss = family_loss(tape, train_rows_[static_cast<std::size_t>(gi)], params_);
                Tensor scaled = scale(loss, 1.0 / static_cast<double>(batch.size()));
                tape.backward(scaled);
                tape.apply_leaf_grads();
                loss_sum += loss.scalar();
            }
            const double train_loss = loss_sum / static_cast<double>(batch.size());
            if (!std::isfinite(train_loss))
                throw std::runtime_error("Trainer: non-finite training loss at step " + std::to_string(step_));
            adam_.step(plist);

            TrainLogEntry entry{step_, train_loss, false, 0};
            if (opt_.val_interval > 0 && !val_rows_.empty() &&
                (step_ % opt_.val_interval == 0 || step_ == last_step)) {
                entry.has_val = true;
                entry.val_loss = validation_loss();
                if (entry.val_loss < result.best_val_loss) {
                    result.best_val_loss = entry.val_loss;
                    result.best = params_;
                }
            }
            result.log.push_back(entry);
            if (on_log) on_log(entry);
        }

        result.last = params_;
        result.adam = adam_;
        result.final_step = step_;
        if (val_rows_.empty() || !std::isfinite(result.best_val_loss)) result.best = params_;
        return result;
    }

    double validation_loss() {
        double total = 0;
        for (auto& rows : val_rows_) {
            Tape tape(false);
            total += family_loss(tape, rows, params_).scalar();
        }
        return total / static_cast<double>(val_rows_.size());
    }

    GranParams& params() { return params_; }
    AdamState& adam() { return adam_; }
    long step() const { return step_; }

private:
    TrainOptions opt_;
    GranConfig cfg_;
    Rng rng_;
    GranParams params_;
    AdamState adam_;
    long step_ = 0;
    std::vector<std::vector<OrderedRows>> train_rows_;
    std::vector<std::vector<OrderedRows>> val_rows_;
};

}  // namespace gran
