#pragma once

#include <string>
#include <vector>

#include "calm/backbone.h"
#include "calm/common.h"
#include "calm/data.h"
#include "calm/distill.h"
#include "calm/metrics.h"
#include "calm/model.h"
#include "json.hpp"

namespace calm {

// Decoupled-weight-decay Adam. Moment slots are laid out in parameter visit
// order on first use.
template <typename T>
class AdamW {
public:
    AdamW(T beta1 = static_cast<T>(0.9), T beta2 = static_cast<T>(0.999),
          T eps = static_cast<T>(1e-8))
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    template <typename Params>
    void step(Params& params, T lr, T weight_decay) {
        ++t_;
        T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1_), t_));
        T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2_), t_));
        size_t slot = 0;
        params.visit([&](const std::string&, PTensor<T>& p) {
            if (slot >= m_.size()) {
                m_.emplace_back(p.v.rows, p.v.cols);
                v_.emplace_back(p.v.rows, p.v.cols);
            }
            auto& m = m_[slot];
            auto& v = v_[slot];
            for (size_t i = 0; i < p.v.a.size(); ++i) {
                T g = p.g.a[i];
                m.a[i] = beta1_ * m.a[i] + (T(1) - beta1_) * g;
                v.a[i] = beta2_ * v.a[i] + (T(1) - beta2_) * g * g;
                T mhat = m.a[i] / bc1;
                T vhat = v.a[i] / bc2;
                p.v.a[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay * p.v.a[i]);
            }
            ++slot;
        });
    }

private:
    T beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Mat<T>> m_, v_;
};

// Training objective: plain cross-entropy or the distillation blend.
enum class Objective { ce, distill };

struct TrainConfig {
    Variant variant = Variant::calm;
    Objective objective = Objective::ce;
    double lr = 1e-4;
    int epochs = 5;
    int micro_batch = 1;  // documents per backward pass (fixed at 1)
    int accum_steps = 16;
    double weight_decay = 0.0;
    double dropout = 0.05;
    uint64_t seed = 0;
    BackboneConfig backbone;  // vocab_size resolved when the vocabulary is built
    int max_component_length = 16;
    int min_count = 1;
    // calm2
    int rank = 8;
    double beta = 0.5;
    // distill
    double kd_alpha = 0.4;
    double temperature = 2.0;
    std::string teacher_checkpoint;
    // parsed for grid-file fidelity; a full-parameter backbone has no adapter
    // scaling, so this knob has no effect
    double lora_alpha = 0.0;

    static TrainConfig from_json(const nlohmann::json& j);
    nlohmann::ordered_json to_json() const;
    void validate() const;
};

struct EpochStats {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    MetricsReport val;
};

struct RunHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = 0;  // 1-based, argmax of validation AUC-PR
    double wall_time_sec = 0.0;  // informational; excluded from determinism checks
};

// Serializes the deterministic fields; wall time is appended only when asked.
nlohmann::ordered_json history_to_json(const RunHistory& h, bool include_wall_time = true);

struct TrainResult {
    ModelParams<float> model;
    RunHistory history;
};

// Full training loop: deterministic given (seed, config, corpora). Validation
// AUC-PR is computed after every epoch and the best epoch's parameters are
// returned. Distillation requires a teacher cache covering the train corpus.
TrainResult train(const TrainConfig& cfg, const Corpus& train_corpus, const Corpus& val_corpus,
                  const TeacherCache* teacher = nullptr);

// Scores every document (probability of class 1); parallel across documents.
ScoredSet score_corpus(ModelParams<float>& model, const std::vector<EncodedDocument>& docs);

// Metrics on a corpus. Uses the checkpoint's stored F1 threshold when present,
// otherwise the best threshold on this scored set.
MetricsReport evaluate(ModelParams<float>& model, const Corpus& corpus);

struct GridEntry {
    std::string name;
    TrainConfig config;
};

struct GridResult {
    struct Row {
        std::string name;
        double val_auc_pr = 0.0;
        int best_epoch = 0;
        MetricsReport val;
    };
    std::vector<Row> rows;
    int best_index = 0;  // ties go to the earliest grid entry
    TrainResult best;
};

GridResult grid_run(const std::vector<GridEntry>& grid, const Corpus& train_corpus,
                    const Corpus& val_corpus, const TeacherCache* teacher = nullptr);

}  // namespace calm
