// calm: train / eval / explain / cost CLI for additive text classifiers.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "calm/checkpoint.h"
#include "calm/csv.h"
#include "calm/interpret.h"
#include "calm/synth.h"
#include "calm/train.h"

namespace fs = std::filesystem;
using namespace calm;

namespace {

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file for digest: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string bytes = ss.str();
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path);
    out << content;
}

struct TrainArgs {
    std::string train_path, val_path, test_path, schema_str, config_path, out_dir;
    std::string variant = "calm";
    std::string teacher_path;
    double lr = -1, kd_alpha = -1, temperature = -1, beta = -1, dropout = -1;
    int epochs = -1, seed = -1, min_count = -1, max_component_length = -1, rank = -1;
    int accum_steps = -1;
    bool balance = true;
};

TrainConfig resolve_config(const TrainArgs& a) {
    nlohmann::json j = nlohmann::json::object();
    if (!a.config_path.empty()) {
        std::ifstream in(a.config_path);
        if (!in) throw DataError("cannot open config: " + a.config_path);
        try {
            in >> j;
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(std::string("config parse error: ") + e.what());
        }
    }
    // command-line flags override the config file
    j["variant"] = a.variant;
    if (a.lr >= 0) j["lr"] = a.lr;
    if (a.epochs >= 0) j["epochs"] = a.epochs;
    if (a.seed >= 0) j["seed"] = a.seed;
    if (a.min_count >= 0) j["min_count"] = a.min_count;
    if (a.max_component_length >= 0) j["max_component_length"] = a.max_component_length;
    if (a.rank >= 0) j["rank"] = a.rank;
    if (a.beta >= 0) j["beta"] = a.beta;
    if (a.dropout >= 0) j["dropout"] = a.dropout;
    if (a.kd_alpha >= 0) j["kd_alpha"] = a.kd_alpha;
    if (a.temperature >= 0) j["temperature"] = a.temperature;
    if (a.accum_steps >= 0) j["accum_steps"] = a.accum_steps;
    if (!a.teacher_path.empty()) j["teacher"] = a.teacher_path;
    return TrainConfig::from_json(j);
}

int run_train(const TrainArgs& args) {
    TrainConfig cfg = resolve_config(args);
    if (args.schema_str.empty()) throw UsageError("--schema is required");
    std::vector<std::string> schema = split_csv_list(args.schema_str);

    fs::create_directories(args.out_dir);
    Corpus train_c = load_corpus(args.train_path, schema, 2, "train");
    Corpus val_c = load_corpus(args.val_path, schema, 2, "validation");
    if (args.balance) train_c = balance_subsample(train_c, cfg.seed);

    nlohmann::ordered_json manifest;
    manifest["tool"] = kVersion;
    manifest["config"] = cfg.to_json();
    manifest["seed"] = cfg.seed;
    manifest["balance"] = args.balance;
    manifest["inputs"] = {{"train", args.train_path}, {"val", args.val_path}};
    manifest["digests"] = {{"train", file_digest(args.train_path)},
                           {"val", file_digest(args.val_path)}};
    if (!args.test_path.empty()) {
        manifest["inputs"]["test"] = args.test_path;
        manifest["digests"]["test"] = file_digest(args.test_path);
    }
    manifest["outputs"] = {{"checkpoint", "checkpoint.json"},
                           {"history", "history.json"},
                           {"metrics", "metrics.json"}};
    write_text(args.out_dir + "/manifest.json", manifest.dump(2) + "\n");
    write_text(args.out_dir + "/config.json", cfg.to_json().dump(2) + "\n");

    TeacherCache cache;
    const TeacherCache* cache_ptr = nullptr;
    if (cfg.objective == Objective::distill) {
        if (cfg.teacher_checkpoint.empty())
            throw UsageError("distillation requires --teacher <checkpoint>");
        auto teacher = load_checkpoint<float>(cfg.teacher_checkpoint);
        cache = cache_teacher(teacher, train_c);
        cache.save(args.out_dir + "/teacher_cache.csv");
        cache_ptr = &cache;
    }

    TrainResult result = train(cfg, train_c, val_c, cache_ptr);
    save_checkpoint(result.model, args.out_dir + "/checkpoint.json");
    result.model.vocab.save(args.out_dir + "/vocab.tsv");
    write_text(args.out_dir + "/history.json", history_to_json(result.history).dump(2) + "\n");

    const auto& best = result.history.epochs[result.history.best_epoch - 1];
    write_text(args.out_dir + "/metrics.json", metrics_to_json(best.val));
    std::cout << "best epoch " << result.history.best_epoch << ", validation auc_pr "
              << best.val.auc_pr << "\n";

    if (!args.test_path.empty()) {
        Corpus test_c = load_corpus(args.test_path, schema, 2, "test");
        MetricsReport m = evaluate(result.model, test_c);
        write_text(args.out_dir + "/test_metrics.json", metrics_to_json(m));
        std::cout << "test auc_pr " << m.auc_pr << ", auc_roc " << m.auc_roc << "\n";
    }
    return 0;
}

int run_eval(const std::string& ckpt, const std::string& corpus_path, const std::string& out,
             const std::string& breakdown_csv, const std::string& pair_csv) {
    auto model = load_checkpoint<float>(ckpt);
    Corpus corpus = load_corpus(corpus_path, model.schema, model.n_classes, "test");
    MetricsReport m = evaluate(model, corpus);
    std::string json = metrics_to_json(m);
    if (!out.empty()) write_text(out, json);
    std::cout << json;
    if (!breakdown_csv.empty()) export_breakdown_csv(model, corpus, breakdown_csv);
    if (!pair_csv.empty()) export_pair_breakdown_csv(model, corpus, pair_csv);
    return 0;
}

int run_explain(const std::string& ckpt, const std::string& corpus_path, const std::string& what,
                const std::string& format, const std::string& out_dir) {
    auto model = load_checkpoint<float>(ckpt);
    Corpus corpus = load_corpus(corpus_path, model.schema, model.n_classes, "explain");
    fs::create_directories(out_dir);
    bool csv = format == "csv" || format == "both";
    bool svg = format == "svg" || format == "both";
    if (!csv && !svg) throw UsageError("--format must be csv, svg, or both");

    auto component_index = [&](const std::string& name) {
        for (int i = 0; i < model.num_components(); ++i)
            if (model.schema[i] == name) return i;
        try {
            int idx = std::stoi(name);
            if (idx >= 0 && idx < model.num_components()) return idx;
        } catch (...) {
        }
        throw DataError("unknown component: " + name);
    };

    if (what == "influence") {
        auto table = influence_scores(model, corpus);
        if (csv) export_influence_csv(table, out_dir + "/influence.csv");
        if (svg) export_influence_svg(table, out_dir + "/influence.svg");
    } else if (what.rfind("curve:", 0) == 0) {
        int comp = component_index(what.substr(6));
        auto curve = feature_value_curve(model, corpus, comp);
        std::string base = out_dir + "/curve_" + model.schema[comp];
        if (csv) export_curve_csv(curve, base + ".csv");
        if (svg) export_curve_svg(curve, base + ".svg");
    } else if (what.rfind("patient:", 0) == 0) {
        std::string doc_id = what.substr(8);
        const Document* doc = nullptr;
        for (const auto& d : corpus.documents)
            if (d.id == doc_id) doc = &d;
        if (!doc) throw DataError("document not found: " + doc_id);
        auto enc = encode_document(*doc, model.vocab, model.max_component_length);
        auto attr = patient_attribution(model, enc);
        std::string base = out_dir + "/patient_" + doc_id;
        if (csv) export_attribution_csv(attr, base + ".csv");
        if (svg) export_attribution_svg(attr, base + ".svg");
    } else if (what.rfind("pair:", 0) == 0) {
        auto parts = split_csv_list(what.substr(5));
        if (parts.size() != 2) throw UsageError("pair wants two components: pair:<i>,<j>");
        int i = component_index(parts[0]);
        int j = component_index(parts[1]);
        if (i > j) std::swap(i, j);
        export_pair_heatmap_csv(model, corpus, i, j,
                                out_dir + "/pair_" + model.schema[i] + "_" + model.schema[j] +
                                    ".csv");
    } else {
        throw UsageError("unknown --what: " + what);
    }
    return 0;
}

int run_cost(const std::string& corpus_path, const std::string& lengths_path,
             const std::string& schema_str, int max_component_length, const std::string& out) {
    std::vector<std::pair<std::string, std::vector<int>>> docs;
    if (!corpus_path.empty()) {
        if (schema_str.empty()) throw UsageError("--schema is required with --corpus");
        Corpus corpus = load_corpus(corpus_path, split_csv_list(schema_str), 2, "cost");
        for (const auto& doc : corpus.documents) {
            std::vector<int> lens;
            for (const auto& [name, text] : doc.components) {
                int inner = std::min(static_cast<int>(tokenize(text).size()),
                                     max_component_length - 2);
                lens.push_back(2 + inner);
            }
            docs.emplace_back(doc.id, std::move(lens));
        }
    } else if (!lengths_path.empty()) {
        std::ifstream in(lengths_path);
        if (!in) throw DataError("cannot open lengths file: " + lengths_path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::vector<int> lens;
            std::stringstream ss(line);
            std::string tok;
            while (ss >> tok) {
                for (auto& piece : split_csv_list(tok)) lens.push_back(std::stoi(piece));
            }
            if (!lens.empty()) docs.emplace_back("line" + std::to_string(lineno), lens);
        }
    } else {
        throw UsageError("cost needs --corpus or --lengths");
    }
    if (docs.empty()) throw DataError("cost: no documents");

    std::string csv =
        "doc_id,m,l_tot,independent,padded,packed_dense,packed_blocksparse,textpair,cheaper\n";
    uint64_t tot_ind = 0, tot_pad = 0, tot_dense = 0;
    for (const auto& [id, lens] : docs) {
        uint64_t ind = attention_cost(lens, CostMode::independent);
        uint64_t pad = attention_cost(lens, CostMode::padded);
        uint64_t dense = attention_cost(lens, CostMode::packed_dense);
        uint64_t bs = attention_cost(lens, CostMode::packed_blocksparse);
        uint64_t tp = textpair_cost_estimate(lens);
        tot_ind += ind;
        tot_pad += pad;
        tot_dense += dense;
        uint64_t l_tot = 0;
        for (int l : lens) l_tot += static_cast<uint64_t>(l);
        std::string cheaper = dense < pad ? "packed_dense" : (pad < dense ? "padded" : "tie");
        csv += csv_escape(id) + "," + std::to_string(lens.size()) + "," + std::to_string(l_tot) +
               "," + std::to_string(ind) + "," + std::to_string(pad) + "," +
               std::to_string(dense) + "," + std::to_string(bs) + "," + std::to_string(tp) +
               "," + cheaper + "\n";
    }
    if (!out.empty()) write_text(out, csv);
    else std::cout << csv;
    std::cout << "totals: independent=" << tot_ind << " padded=" << tot_pad
              << " packed_dense=" << tot_dense << "\n";
    return 0;
}

int run_grid(const std::string& grid_path, const TrainArgs& base_args) {
    std::ifstream in(grid_path);
    if (!in) throw DataError("cannot open grid file: " + grid_path);
    nlohmann::ordered_json gj;
    try {
        in >> gj;
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("grid parse error: ") + e.what());
    }
    TrainConfig base = resolve_config(base_args);
    std::vector<GridEntry> grid;
    auto add_entry = [&](const std::string& name, const nlohmann::json& overrides) {
        nlohmann::json merged = base.to_json();
        for (auto it = overrides.begin(); it != overrides.end(); ++it) merged[it.key()] = *it;
        grid.push_back({name, TrainConfig::from_json(merged)});
    };
    if (gj.is_object()) {
        for (auto it = gj.begin(); it != gj.end(); ++it) add_entry(it.key(), *it);
    } else if (gj.is_array()) {
        for (size_t i = 0; i < gj.size(); ++i) add_entry("cfg" + std::to_string(i + 1), gj[i]);
    } else {
        throw DataError("grid file must be a JSON object or array");
    }

    std::vector<std::string> schema = split_csv_list(base_args.schema_str);
    if (schema.empty()) throw UsageError("--schema is required");
    Corpus train_c = load_corpus(base_args.train_path, schema, 2, "train");
    Corpus val_c = load_corpus(base_args.val_path, schema, 2, "validation");
    if (base_args.balance) train_c = balance_subsample(train_c, base.seed);

    fs::create_directories(base_args.out_dir);
    GridResult result = grid_run(grid, train_c, val_c);

    std::string csv = "name,lr,rank,dropout,val_auc_pr,best_epoch\n";
    for (size_t i = 0; i < grid.size(); ++i) {
        const auto& row = result.rows[i];
        csv += row.name + "," + fmt_double(grid[i].config.lr) + "," +
               std::to_string(grid[i].config.rank) + "," + fmt_double(grid[i].config.dropout) +
               "," + fmt_double(row.val_auc_pr) + "," + std::to_string(row.best_epoch) + "\n";
    }
    write_text(base_args.out_dir + "/leaderboard.csv", csv);
    save_checkpoint(result.best.model, base_args.out_dir + "/best_checkpoint.json");
    write_text(base_args.out_dir + "/best_history.json",
               history_to_json(result.best.history).dump(2) + "\n");
    std::cout << "winner: " << result.rows[result.best_index].name << " (val auc_pr "
              << result.rows[result.best_index].val_auc_pr << ")\n"
              << csv;
    return 0;
}

int run_synth(const std::string& task, int docs, int val_docs, int test_docs, uint64_t seed,
              const std::string& out_dir) {
    fs::create_directories(out_dir);
    auto gen = [&](int n, uint64_t s, const std::string& split) {
        if (task == "additive") return make_additive_corpus(n, 6, 10, s, split);
        if (task == "logistic") return make_logistic_corpus(n, 6, 10, 0.35, s, split);
        if (task == "xor") return make_xor_corpus(n, s, split);
        if (task == "separable") return make_separable_corpus(n, s, split);
        throw UsageError("unknown synth task: " + task);
    };
    Corpus train_c = gen(docs, seed, "train");
    Corpus val_c = gen(val_docs, seed + 1, "validation");
    Corpus test_c = gen(test_docs, seed + 2, "test");
    save_corpus_jsonl(train_c, out_dir + "/train.jsonl");
    save_corpus_jsonl(val_c, out_dir + "/val.jsonl");
    save_corpus_jsonl(test_c, out_dir + "/test.jsonl");
    std::string schema;
    for (size_t i = 0; i < train_c.schema.size(); ++i)
        schema += (i ? "," : "") + train_c.schema[i];
    write_text(out_dir + "/schema.txt", schema + "\n");
    std::cout << "schema: " << schema << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"calm: inherently interpretable additive text classifiers"};
    app.require_subcommand(1);

    TrainArgs targs;
    auto add_common_train_flags = [&](CLI::App* cmd) {
        cmd->add_option("--train", targs.train_path, "training corpus (jsonl)")->required();
        cmd->add_option("--val", targs.val_path, "validation corpus (jsonl)")->required();
        cmd->add_option("--test", targs.test_path, "optional test corpus (jsonl)");
        cmd->add_option("--schema", targs.schema_str, "comma-separated component names")
            ->required();
        cmd->add_option("--config", targs.config_path, "JSON config file");
        cmd->add_option("--out", targs.out_dir, "run directory")->required();
        cmd->add_option("--lr", targs.lr, "learning rate");
        cmd->add_option("--epochs", targs.epochs, "training epochs");
        cmd->add_option("--seed", targs.seed, "random seed");
        cmd->add_option("--accum-steps", targs.accum_steps, "gradient accumulation steps");
        cmd->add_option("--min-count", targs.min_count, "vocabulary min token count");
        cmd->add_option("--max-component-length", targs.max_component_length,
                        "max tokens per component incl. framing");
        cmd->add_option("--rank", targs.rank, "interaction rank R (calm2)");
        cmd->add_option("--beta", targs.beta, "interaction blend weight (calm2)");
        cmd->add_option("--dropout", targs.dropout, "residual dropout rate");
        cmd->add_flag("--balance,!--no-balance", targs.balance,
                      "balance the training split by subsampling the majority class");
    };

    auto* train_cmd = app.add_subcommand("train", "train a model variant");
    add_common_train_flags(train_cmd);
    train_cmd->add_option("--variant", targs.variant, "baseline|calm|calm2|distill");
    train_cmd->add_option("--teacher", targs.teacher_path, "teacher checkpoint (distill)");
    train_cmd->add_option("--kd-alpha", targs.kd_alpha, "distillation blend weight");
    train_cmd->add_option("--temperature", targs.temperature, "distillation temperature");

    auto* distill_cmd = app.add_subcommand("distill", "train a calm student from a teacher");
    add_common_train_flags(distill_cmd);
    distill_cmd->add_option("--teacher", targs.teacher_path, "teacher checkpoint")->required();
    distill_cmd->add_option("--alpha", targs.kd_alpha, "distillation blend weight");
    distill_cmd->add_option("--temperature", targs.temperature, "distillation temperature");

    std::string eval_ckpt, eval_corpus, eval_out, eval_breakdown, eval_pair_breakdown;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
    eval_cmd->add_option("--checkpoint", eval_ckpt)->required();
    eval_cmd->add_option("--corpus", eval_corpus)->required();
    eval_cmd->add_option("--out", eval_out, "metrics JSON path");
    eval_cmd->add_option("--breakdown", eval_breakdown, "per-component breakdown CSV path");
    eval_cmd->add_option("--pair-breakdown", eval_pair_breakdown, "pairwise breakdown CSV path");

    std::string ex_ckpt, ex_corpus, ex_what, ex_format = "both", ex_out;
    auto* explain_cmd = app.add_subcommand("explain", "export interpretability artifacts");
    explain_cmd->add_option("--checkpoint", ex_ckpt)->required();
    explain_cmd->add_option("--corpus", ex_corpus)->required();
    explain_cmd->add_option("--what", ex_what,
                            "influence | curve:<component> | patient:<doc_id> | pair:<i>,<j>")
        ->required();
    explain_cmd->add_option("--format", ex_format, "csv|svg|both");
    explain_cmd->add_option("--out", ex_out, "output directory")->required();

    std::string cost_corpus, cost_lengths, cost_schema, cost_out;
    int cost_mcl = 16;
    auto* cost_cmd = app.add_subcommand("cost", "attention cost accounting");
    cost_cmd->add_option("--corpus", cost_corpus, "corpus (jsonl)");
    cost_cmd->add_option("--lengths", cost_lengths, "file of per-doc length lists");
    cost_cmd->add_option("--schema", cost_schema, "comma-separated component names");
    cost_cmd->add_option("--max-component-length", cost_mcl);
    cost_cmd->add_option("--out", cost_out, "CSV output path");

    std::string grid_path;
    auto* grid_cmd = app.add_subcommand("grid", "run a hyperparameter grid");
    add_common_train_flags(grid_cmd);
    grid_cmd->add_option("--variant", targs.variant, "baseline|calm|calm2");
    grid_cmd->add_option("--grid", grid_path, "grid JSON file")->required();

    std::string synth_task = "additive", synth_out;
    int synth_docs = 2000, synth_val = 400, synth_test = 400;
    uint64_t synth_seed = 1;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic corpus");
    synth_cmd->add_option("--task", synth_task, "additive|logistic|xor|separable");
    synth_cmd->add_option("--docs", synth_docs, "training documents");
    synth_cmd->add_option("--val-docs", synth_val);
    synth_cmd->add_option("--test-docs", synth_test);
    synth_cmd->add_option("--seed", synth_seed);
    synth_cmd->add_option("--out", synth_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*train_cmd) return run_train(targs);
        if (*distill_cmd) {
            targs.variant = "distill";
            return run_train(targs);
        }
        if (*eval_cmd)
            return run_eval(eval_ckpt, eval_corpus, eval_out, eval_breakdown, eval_pair_breakdown);
        if (*explain_cmd) return run_explain(ex_ckpt, ex_corpus, ex_what, ex_format, ex_out);
        if (*cost_cmd) return run_cost(cost_corpus, cost_lengths, cost_schema, cost_mcl, cost_out);
        if (*grid_cmd) return run_grid(grid_path, targs);
        if (*synth_cmd)
            return run_synth(synth_task, synth_docs, synth_val, synth_test, synth_seed, synth_out);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
