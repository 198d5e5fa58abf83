#include "calm/train.h"

#include <chrono>
#include <cmath>
#include <exception>

namespace calm {

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("variant")) {
        std::string v = j["variant"].get<std::string>();
        if (v == "distill" || v == "calm-distill") {
            c.variant = Variant::calm;
            c.objective = Objective::distill;
        } else {
            c.variant = variant_from_name(v);
        }
    }
    if (j.contains("lr")) c.lr = j["lr"].get<double>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("micro_batch")) c.micro_batch = j["micro_batch"].get<int>();
    if (j.contains("accum_steps")) c.accum_steps = j["accum_steps"].get<int>();
    if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"].get<double>();
    if (j.contains("dropout")) c.dropout = j["dropout"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("d_model")) c.backbone.d_model = j["d_model"].get<int>();
    if (j.contains("n_layers")) c.backbone.n_layers = j["n_layers"].get<int>();
    if (j.contains("n_heads")) c.backbone.n_heads = j["n_heads"].get<int>();
    if (j.contains("d_ff")) c.backbone.d_ff = j["d_ff"].get<int>();
    if (j.contains("max_position")) c.backbone.max_position = j["max_position"].get<int>();
    if (j.contains("causal_within_segment"))
        c.backbone.causal_within_segment = j["causal_within_segment"].get<bool>();
    if (j.contains("max_component_length"))
        c.max_component_length = j["max_component_length"].get<int>();
    if (j.contains("min_count")) c.min_count = j["min_count"].get<int>();
    // grid files name the low-rank dimension "rank"; it doubles as the calm2
    // interaction rank, and "R" is accepted as an alias
    if (j.contains("rank")) c.rank = j["rank"].get<int>();
    if (j.contains("R")) c.rank = j["R"].get<int>();
    if (j.contains("beta")) c.beta = j["beta"].get<double>();
    if (j.contains("alpha")) c.lora_alpha = j["alpha"].get<double>();
    if (j.contains("kd_alpha")) c.kd_alpha = j["kd_alpha"].get<double>();
    if (j.contains("temperature")) c.temperature = j["temperature"].get<double>();
    if (j.contains("teacher")) c.teacher_checkpoint = j["teacher"].get<std::string>();
    c.validate();
    return c;
}

nlohmann::ordered_json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["variant"] = objective == Objective::distill ? "distill" : variant_name(variant);
    j["lr"] = lr;
    j["epochs"] = epochs;
    j["micro_batch"] = micro_batch;
    j["accum_steps"] = accum_steps;
    j["weight_decay"] = weight_decay;
    j["dropout"] = dropout;
    j["seed"] = seed;
    j["d_model"] = backbone.d_model;
    j["n_layers"] = backbone.n_layers;
    j["n_heads"] = backbone.n_heads;
    j["d_ff"] = backbone.d_ff;
    j["max_position"] = backbone.max_position;
    j["causal_within_segment"] = backbone.causal_within_segment;
    j["max_component_length"] = max_component_length;
    j["min_count"] = min_count;
    j["rank"] = rank;
    j["beta"] = beta;
    j["alpha"] = lora_alpha;
    if (objective == Objective::distill) {
        j["kd_alpha"] = kd_alpha;
        j["temperature"] = temperature;
        j["teacher"] = teacher_checkpoint;
    }
    return j;
}

void TrainConfig::validate() const {
    if (lr < 0) throw UsageError("lr must be >= 0");
    if (epochs <= 0 || accum_steps <= 0 || micro_batch != 1)
        throw UsageError("epochs/accum_steps must be positive; micro_batch is fixed at 1");
    if (dropout < 0 || dropout >= 1) throw UsageError("dropout must lie in [0,1)");
    if (kd_alpha < 0 || kd_alpha > 1) throw UsageError("kd_alpha must lie in [0,1]");
    if (temperature <= 0) throw UsageError("temperature must be > 0");
    if (beta < 0 || beta > 1) throw UsageError("beta must lie in [0,1]");
    if (objective == Objective::distill && variant != Variant::calm)
        throw UsageError("distillation trains a calm student");
}

nlohmann::ordered_json history_to_json(const RunHistory& h, bool include_wall_time) {
    nlohmann::ordered_json j;
    j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : h.epochs) {
        nlohmann::ordered_json ej;
        ej["epoch"] = e.epoch;
        ej["train_loss"] = e.train_loss;
        nlohmann::ordered_json vj;
        vj["auc_pr"] = e.val.auc_pr;
        vj["f1"] = e.val.f1;
        vj["auc_roc"] = e.val.auc_roc;
        vj["threshold"] = e.val.threshold;
        vj["n_pos"] = e.val.n_pos;
        vj["n_neg"] = e.val.n_neg;
        ej["val"] = vj;
        j["epochs"].push_back(ej);
    }
    j["best_epoch"] = h.best_epoch;
    if (include_wall_time) j["wall_time_sec"] = h.wall_time_sec;
    return j;
}

ScoredSet score_corpus(ModelParams<float>& model, const std::vector<EncodedDocument>& docs) {
    ScoredSet set;
    set.docs.resize(docs.size());
    std::exception_ptr err;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < static_cast<int>(docs.size()); ++i) {
        try {
            auto pred = predict(model, docs[i]);
            set.docs[i] = {docs[i].id, static_cast<double>(pred.score), docs[i].label};
        } catch (...) {
#pragma omp critical
            err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
    return set;
}

TrainResult train(const TrainConfig& cfg, const Corpus& train_corpus, const Corpus& val_corpus,
                  const TeacherCache* teacher) {
    cfg.validate();
    if (train_corpus.documents.empty()) throw DataError("train corpus is empty");
    if (val_corpus.documents.empty()) throw DataError("validation corpus is empty");
    if (cfg.objective == Objective::distill && teacher == nullptr)
        throw DataError("distillation requires a teacher cache");

    auto t0 = std::chrono::steady_clock::now();

    Vocabulary vocab = build_vocab(train_corpus, cfg.min_count);
    BackboneConfig bb = cfg.backbone;
    bb.vocab_size = vocab.size();

    ModelParams<float> model;
    model.max_component_length = cfg.max_component_length;
    model.init(cfg.variant, train_corpus.schema, vocab, bb, cfg.seed, cfg.rank,
               static_cast<float>(cfg.beta));

    auto train_docs = encode_corpus(train_corpus, vocab, cfg.max_component_length);
    auto val_docs = encode_corpus(val_corpus, vocab, cfg.max_component_length);

    AdamW<float> opt;
    Rng drop_rng = Rng::substream(cfg.seed, 3);
    EncodeOptions<float> train_opts;
    train_opts.training = true;
    train_opts.dropout = static_cast<float>(cfg.dropout);
    train_opts.rng = &drop_rng;

    std::vector<size_t> order(train_docs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    RunHistory history;
    ModelParams<float> best = model;
    double best_auc_pr = -1.0;
    float alpha = static_cast<float>(cfg.kd_alpha);
    float temp = static_cast<float>(cfg.temperature);
    bool use_kd = cfg.objective == Objective::distill && alpha > 0.0f;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::substream(cfg.seed, 100 + static_cast<uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        size_t n = order.size();
        size_t pos = 0;
        while (pos < n) {
            size_t group = std::min(static_cast<size_t>(cfg.accum_steps), n - pos);
            model.zero_grad();
            for (size_t g = 0; g < group; ++g) {
                const auto& doc = train_docs[order[pos + g]];
                Tape<float> tape;
                const std::vector<float>* tz = nullptr;
                std::vector<float> tz_store;
                if (use_kd) {
                    tz_store = teacher->at(doc.id);
                    tz = &tz_store;
                }
                VRef loss = doc_loss_refs(tape, model, doc, train_opts, tz, alpha, temp);
                double lv = static_cast<double>(tape.scalar(loss));
                if (!std::isfinite(lv))
                    throw NumericError("training diverged: non-finite loss at epoch " +
                                       std::to_string(epoch) + ", doc " + doc.id);
                loss_sum += lv;
                VRef scaled = tape.scale(loss, 1.0f / static_cast<float>(group));
                tape.backward(scaled);
            }
            opt.step(model, static_cast<float>(cfg.lr), static_cast<float>(cfg.weight_decay));
            pos += group;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(n);
        ScoredSet val_scores = score_corpus(model, val_docs);
        for (const auto& d : val_scores.docs)
            if (!std::isfinite(d.score))
                throw NumericError("training diverged: non-finite validation score at epoch " +
                                   std::to_string(epoch));
        double thr = best_f1_threshold(val_scores);
        stats.val = compute_metrics(val_scores, thr);
        history.epochs.push_back(stats);
        if (stats.val.auc_pr > best_auc_pr) {
            best_auc_pr = stats.val.auc_pr;
            history.best_epoch = epoch;
            best = model;
            best.f1_threshold = thr;
        }
    }

    auto t1 = std::chrono::steady_clock::now();
    history.wall_time_sec = std::chrono::duration<double>(t1 - t0).count();
    return {std::move(best), std::move(history)};
}

MetricsReport evaluate(ModelParams<float>& model, const Corpus& corpus) {
    if (corpus.documents.empty()) throw DataError("evaluate: empty corpus");
    if (corpus.schema != model.schema)
        throw DataError("evaluate: corpus schema does not match checkpoint schema");
    auto docs = encode_corpus(corpus, model.vocab, model.max_component_length);
    ScoredSet scores = score_corpus(model, docs);
    double thr = model.f1_threshold ? *model.f1_threshold : best_f1_threshold(scores);
    return compute_metrics(scores, thr);
}

GridResult grid_run(const std::vector<GridEntry>& grid, const Corpus& train_corpus,
                    const Corpus& val_corpus, const TeacherCache* teacher) {
    if (grid.empty()) throw UsageError("grid_run: empty grid");
    GridResult result;
    double best = -1.0;
    for (size_t i = 0; i < grid.size(); ++i) {
        TrainResult r = train(grid[i].config, train_corpus, val_corpus, teacher);
        const auto& best_epoch = r.history.epochs[r.history.best_epoch - 1];
        result.rows.push_back(
            {grid[i].name, best_epoch.val.auc_pr, r.history.best_epoch, best_epoch.val});
        if (best_epoch.val.auc_pr > best) {
            best = best_epoch.val.auc_pr;
            result.best_index = static_cast<int>(i);
            result.best = std::move(r);
        }
    }
    return result;
}

}  // namespace calm
