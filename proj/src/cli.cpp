#include "edgeprune/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "edgeprune/baselines.hpp"
#include "edgeprune/io.hpp"
#include "edgeprune/masks.hpp"
#include "edgeprune/metrics.hpp"
#include "edgeprune/model.hpp"
#include "edgeprune/pruner.hpp"
#include "edgeprune/tasks.hpp"
#include "edgeprune/zoo.hpp"

namespace edgeprune {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct RunDir {
    std::string path;

    std::string file(const std::string& name) const { return path + "/" + name; }
};

RunDir start_run(const std::string& out, const std::string& command,
                 const std::vector<std::string>& args, uint64_t seed,
                 const std::vector<std::string>& input_paths) {
    create_run_dir(out);
    Manifest m;
    m.command = command;
    m.args = args;
    m.seed = seed;
    m.git_describe = git_describe_string();
    for (const std::string& p : input_paths)
        if (fs::exists(p) && fs::is_regular_file(p)) m.inputs.push_back({p, hex64(hash_file(p))});
    RunDir rd{out};
    write_manifest(m, rd.file("manifest.json"));
    return rd;
}

std::vector<std::string> dataset_files(const std::string& dir) {
    return {dir + "/vocab.json", dir + "/meta.json", dir + "/train.jsonl", dir + "/val.jsonl",
            dir + "/test.jsonl"};
}

Dataset gen_zoo_dataset(const std::string& task, int seq_len, int n_train, int n_val,
                        uint64_t seed) {
    Dataset ds;
    ds.task = TaskKind::Other;
    ds.vocab.add("<bos>");
    if (task == "xproportion") {
        ds.vocab.add("a");
        ds.vocab.add("b");
        ds.vocab.add("x");
    } else {
        ds.vocab.add("t1");
        ds.vocab.add("t2");
        ds.vocab.add("t3");
    }
    ds.vocab.pad_id = 0;
    ds.vocab.bos_id = 0;
    ds.train = zoo_prune_examples(3, seq_len, n_train, seed);
    ds.val = zoo_prune_examples(3, seq_len, n_val, seed ^ 0x1234567ull);
    ds.test = zoo_prune_examples(3, seq_len, n_val, seed ^ 0x7654321ull);
    return ds;
}

const std::vector<ExamplePair>& pick_split(const Dataset& ds, const std::string& split) {
    if (split == "train") return ds.train;
    if (split == "val") return ds.val;
    if (split == "test") return ds.test;
    throw std::runtime_error("unknown split: " + split);
}

AblationMode parse_ablation(const std::string& s) {
    if (s == "interchange") return AblationMode::Interchange;
    if (s == "zero") return AblationMode::Zero;
    throw std::runtime_error("unknown ablation mode: " + s);
}

// JSON config file merged under explicit flags; unknown keys are rejected
// before any work starts.
void apply_json_config(CLI::App* cmd, const std::string& path) {
    if (path.empty()) return;
    json j = json::parse(read_text_file(path));
    if (!j.is_object()) throw std::runtime_error("config file must hold a JSON object");
    for (auto& [key, value] : j.items()) {
        CLI::Option* opt = cmd->get_option_no_throw("--" + key);
        if (!opt) throw std::runtime_error("config key not recognized by this command: " + key);
        if (opt->count() > 0) continue;  // explicit flag wins
        std::string text = value.is_string() ? value.get<std::string>() : value.dump();
        opt->add_result(text);
        opt->run_callback();
    }
}

void eval_to_files(const EvalReport& rep, const RunDir& rd) {
    write_text_file(rd.file("report.json"), rep.to_json());
    write_text_file(rd.file("report.csv"), rep.to_csv());
    std::cout << rep.to_json() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"edgeprune: transformer circuit discovery by edge pruning, with ACDC and EAP "
                 "baselines"};
    app.require_subcommand(1);

    // ---- gen-data ----------------------------------------------------------
    auto* gen = app.add_subcommand("gen-data", "generate a clean/corrupted dataset");
    std::string gen_task, gen_out;
    uint64_t gen_seed = 0;
    int gen_templates = 10, gen_names = 30;
    int gen_train = -1, gen_val = -1, gen_test = -1, gen_seq_len = 5;
    gen->add_option("task", gen_task, "ioi | gt | gp | xproportion | reverse")->required();
    gen->add_option("--out", gen_out)->required();
    gen->add_option("--seed", gen_seed);
    gen->add_option("--n-templates", gen_templates);
    gen->add_option("--name-pool", gen_names);
    gen->add_option("--train", gen_train);
    gen->add_option("--val", gen_val);
    gen->add_option("--test", gen_test);
    gen->add_option("--seq-len", gen_seq_len, "zoo tasks: fixed sequence length");

    // ---- train-toy ---------------------------------------------------------
    auto* toy = app.add_subcommand("train-toy", "train a small transformer on a dataset");
    std::string toy_data, toy_out;
    uint64_t toy_seed = 0;
    int toy_layers = 2, toy_heads = 4, toy_dmodel = 64, toy_dmlp = 128, toy_steps = 4000;
    float toy_lr = 3e-3f, toy_bar = 0.95f;
    toy->add_option("--data", toy_data)->required();
    toy->add_option("--out", toy_out)->required();
    toy->add_option("--seed", toy_seed);
    toy->add_option("--layers", toy_layers);
    toy->add_option("--heads", toy_heads);
    toy->add_option("--d-model", toy_dmodel);
    toy->add_option("--d-mlp", toy_dmlp);
    toy->add_option("--max-steps", toy_steps);
    toy->add_option("--lr", toy_lr);
    toy->add_option("--accuracy-bar", toy_bar);

    // ---- prune -------------------------------------------------------------
    auto* pr = app.add_subcommand("prune", "edge pruning on a model + dataset");
    std::string pr_model, pr_data, pr_out, pr_preset = "toy", pr_ablation, pr_config;
    std::string pr_kl_positions;
    uint64_t pr_seed = 0;
    int pr_steps = -1, pr_batch = -1, pr_warmup = -1, pr_lr_warmup = -1, pr_ckpt = -1;
    double pr_t_edge = -1, pr_t_node = -1, pr_lr = -1, pr_lr_lambda = -1;
    pr->add_option("--model", pr_model)->required();
    pr->add_option("--data", pr_data)->required();
    pr->add_option("--out", pr_out)->required();
    pr->add_option("--preset", pr_preset, "gpt2 | ioi-t1 | tracr-xproportion | tracr-reverse | toy");
    pr->add_option("--config", pr_config, "JSON file with option overrides");
    pr->add_option("--seed", pr_seed);
    pr->add_option("--steps", pr_steps);
    pr->add_option("--batch-size", pr_batch);
    pr->add_option("--sparsity-warmup", pr_warmup);
    pr->add_option("--lr-warmup", pr_lr_warmup);
    pr->add_option("--checkpoint-every", pr_ckpt);
    pr->add_option("--t-edge", pr_t_edge);
    pr->add_option("--t-node", pr_t_node);
    pr->add_option("--lr", pr_lr);
    pr->add_option("--lr-lambda", pr_lr_lambda);
    pr->add_option("--ablation", pr_ablation, "interchange | zero");
    pr->add_option("--kl-positions", pr_kl_positions, "all | answer");

    // ---- acdc --------------------------------------------------------------
    auto* ac = app.add_subcommand("acdc", "greedy edge-ablation baseline");
    std::string ac_model, ac_data, ac_out, ac_ablation = "interchange", ac_split = "train";
    double ac_tau = 1e-3;
    uint64_t ac_seed = 0;
    int ac_limit = 0;
    ac->add_option("--model", ac_model)->required();
    ac->add_option("--data", ac_data)->required();
    ac->add_option("--out", ac_out)->required();
    ac->add_option("--tau", ac_tau)->required();
    ac->add_option("--ablation", ac_ablation);
    ac->add_option("--split", ac_split);
    ac->add_option("--limit", ac_limit, "cap the number of examples (0 = all)");
    ac->add_option("--seed", ac_seed);

    // ---- eap ---------------------------------------------------------------
    auto* ep = app.add_subcommand("eap", "edge attribution patching baseline");
    std::string ep_model, ep_data, ep_out, ep_metric = "kl", ep_split = "train";
    int ep_k = -1;
    uint64_t ep_seed = 0;
    ep->add_option("--model", ep_model)->required();
    ep->add_option("--data", ep_data)->required();
    ep->add_option("--out", ep_out)->required();
    ep->add_option("--k", ep_k, "edges kept (default |E|/10)");
    ep->add_option("--metric", ep_metric, "kl | logit-diff");
    ep->add_option("--split", ep_split);
    ep->add_option("--seed", ep_seed);

    // ---- eval --------------------------------------------------------------
    auto* ev = app.add_subcommand("eval", "evaluate a circuit against the full model");
    std::string ev_model, ev_data, ev_circuit, ev_out, ev_split = "val",
                ev_ablation = "interchange";
    ev->add_option("--model", ev_model)->required();
    ev->add_option("--data", ev_data)->required();
    ev->add_option("--circuit", ev_circuit)->required();
    ev->add_option("--out", ev_out)->required();
    ev->add_option("--split", ev_split);
    ev->add_option("--ablation", ev_ablation);

    // ---- sweep -------------------------------------------------------------
    auto* sw = app.add_subcommand("sweep", "sparsity frontier for one method");
    std::string sw_model, sw_data, sw_out, sw_method = "edge-pruning", sw_preset = "toy";
    std::string sw_ablation = "interchange";
    std::vector<double> sw_sparsities, sw_taus;
    uint64_t sw_seed = 0;
    sw->add_option("--model", sw_model)->required();
    sw->add_option("--data", sw_data)->required();
    sw->add_option("--out", sw_out)->required();
    sw->add_option("--method", sw_method, "edge-pruning | acdc | eap");
    sw->add_option("--preset", sw_preset);
    sw->add_option("--sparsities", sw_sparsities)->delimiter(',');
    sw->add_option("--taus", sw_taus)->delimiter(',');
    sw->add_option("--ablation", sw_ablation);
    sw->add_option("--seed", sw_seed);

    // ---- export-dot --------------------------------------------------------
    auto* dot = app.add_subcommand("export-dot", "write a DOT diagram of a circuit");
    std::string dot_model, dot_circuit, dot_out;
    dot->add_option("--model", dot_model)->required();
    dot->add_option("--circuit", dot_circuit)->required();
    dot->add_option("--out", dot_out)->required();

    // ---- intersect ---------------------------------------------------------
    auto* in = app.add_subcommand("intersect", "circuit intersection report");
    std::string in_model, in_a, in_b, in_out;
    in->add_option("--model", in_model)->required();
    in->add_option("--a", in_a)->required();
    in->add_option("--b", in_b)->required();
    in->add_option("--out", in_out)->required();

    // ---- faithfulness-scatter ----------------------------------------------
    auto* fa = app.add_subcommand("faithfulness-scatter", "per-edge (m_e, c_e) data");
    std::string fa_model, fa_data, fa_circuit, fa_out, fa_split = "val";
    int fa_limit = 0;
    fa->add_option("--model", fa_model)->required();
    fa->add_option("--data", fa_data)->required();
    fa->add_option("--circuit", fa_circuit)->required();
    fa->add_option("--out", fa_out)->required();
    fa->add_option("--split", fa_split);
    fa->add_option("--limit", fa_limit, "cap the number of examples (0 = all)");

    // ---- export-zoo --------------------------------------------------------
    auto* zoo = app.add_subcommand("export-zoo", "write a compiled fixture + ground truth");
    std::string zoo_program, zoo_out;
    zoo->add_option("program", zoo_program, "xproportion | reverse")->required();
    zoo->add_option("--out", zoo_out)->required();

    std::vector<std::string> raw = args;
    std::reverse(raw.begin(), raw.end());
    try {
        app.parse(raw);

        if (*gen) {
            SplitSizes sizes;
            Dataset ds;
            if (gen_task == "ioi") {
                sizes = kIoiSplitPreset;
                if (gen_train >= 0) sizes.train = gen_train;
                if (gen_val >= 0) sizes.val = gen_val;
                if (gen_test >= 0) sizes.test = gen_test;
                ds = gen_ioi(sizes, gen_templates, gen_names, gen_seed);
            } else if (gen_task == "gt") {
                sizes = kGreaterThanSplitPreset;
                if (gen_train >= 0) sizes.train = gen_train;
                if (gen_val >= 0) sizes.val = gen_val;
                if (gen_test >= 0) sizes.test = gen_test;
                ds = gen_greater_than(sizes, gen_seed);
            } else if (gen_task == "gp") {
                sizes = kGenderedPronounSplitPreset;
                if (gen_train >= 0) sizes.train = gen_train;
                if (gen_val >= 0) sizes.val = gen_val;
                if (gen_test >= 0) sizes.test = gen_test;
                ds = gen_gendered_pronoun(sizes, gen_seed);
            } else if (gen_task == "xproportion" || gen_task == "reverse") {
                ds = gen_zoo_dataset(gen_task, gen_seq_len, gen_train >= 0 ? gen_train : 192,
                                     gen_val >= 0 ? gen_val : 64, gen_seed);
            } else {
                throw std::runtime_error("unknown task: " + gen_task);
            }
            RunDir rd = start_run(gen_out, "gen-data", args, gen_seed, {});
            save_dataset(ds, rd.file("dataset"));
            std::cout << "dataset written to " << rd.file("dataset") << " (train " << ds.train.size()
                      << ", val " << ds.val.size() << ", test " << ds.test.size() << ")\n";
            return 0;
        }

        if (*toy) {
            Dataset ds = load_dataset(toy_data);
            ToyTrainConfig cfg;
            cfg.model.n_layers = toy_layers;
            cfg.model.n_heads = toy_heads;
            cfg.model.d_model = toy_dmodel;
            cfg.model.d_head = toy_dmodel / toy_heads;
            cfg.model.d_mlp = toy_dmlp;
            cfg.max_steps = toy_steps;
            cfg.lr = toy_lr;
            cfg.accuracy_bar = toy_bar;
            cfg.seed = toy_seed;
            cfg.verbose = true;
            RunDir rd = start_run(toy_out, "train-toy", args, toy_seed, dataset_files(toy_data));
            DisentangledTransformer model = train_toy_lm(ds, cfg);
            save_model(model, rd.file("model.json"));
            const float acc = toy_accuracy(model, ds, ds.val);
            std::cout << "final validation accuracy " << acc << "; model written to "
                      << rd.file("model.json") << "\n";
            return 0;
        }

        if (*pr) {
            apply_json_config(pr, pr_config);
            auto preset = preset_by_name(pr_preset);
            if (!preset) throw std::runtime_error("unknown preset: " + pr_preset);
            PruneConfig cfg = *preset;
            cfg.seed = pr_seed;
            if (pr_steps > 0) cfg.steps = pr_steps;
            if (pr_batch > 0) cfg.batch_size = pr_batch;
            if (pr_warmup >= 0) cfg.sparsity_warmup_steps = pr_warmup;
            if (pr_lr_warmup >= 0) cfg.lr_warmup_steps = pr_lr_warmup;
            if (pr_ckpt > 0) cfg.checkpoint_every = pr_ckpt;
            if (pr_t_edge >= 0) cfg.t_edge = static_cast<float>(pr_t_edge);
            if (pr_t_node >= 0) cfg.t_node = static_cast<float>(pr_t_node);
            if (pr_lr > 0) cfg.lr_log_alpha = static_cast<float>(pr_lr);
            if (pr_lr_lambda > 0) cfg.lr_lambda = static_cast<float>(pr_lr_lambda);
            if (!pr_ablation.empty()) cfg.ablation = parse_ablation(pr_ablation);
            if (!pr_kl_positions.empty())
                cfg.kl_positions =
                    pr_kl_positions == "answer" ? KlPositions::Answer : KlPositions::All;
            cfg.verbose = true;
            Dataset ds = load_dataset(pr_data);
            DisentangledTransformer model = load_model(pr_model);
            std::vector<std::string> inputs = dataset_files(pr_data);
            inputs.push_back(pr_model);
            RunDir rd = start_run(pr_out, "prune", args, pr_seed, inputs);
            cfg.out_dir = rd.path;
            PruneResult res = prune(model, ds.train, cfg);
            std::cout << "circuit: " << res.circuit.n_kept_edges() << " edges, sparsity "
                      << res.circuit.sparsity() << ", threshold " << res.discretize_info.threshold
                      << " -> " << rd.file("circuit.json") << "\n";
            return 0;
        }

        if (*ac) {
            Dataset ds = load_dataset(ac_data);
            DisentangledTransformer model = load_model(ac_model);
            std::vector<std::string> inputs = dataset_files(ac_data);
            inputs.push_back(ac_model);
            RunDir rd = start_run(ac_out, "acdc", args, ac_seed, inputs);
            AcdcOptions opts;
            opts.ablation = parse_ablation(ac_ablation);
            std::vector<ExamplePair> split = pick_split(ds, ac_split);
            if (ac_limit > 0 && static_cast<int>(split.size()) > ac_limit)
                split.resize(ac_limit);
            Circuit c = acdc(model, split, static_cast<float>(ac_tau), opts);
            save_circuit(c, model.graph(), rd.file("circuit.json"));
            std::cout << "acdc circuit: " << c.n_kept_edges() << " edges, sparsity "
                      << c.sparsity() << "\n";
            return 0;
        }

        if (*ep) {
            Dataset ds = load_dataset(ep_data);
            DisentangledTransformer model = load_model(ep_model);
            std::vector<std::string> inputs = dataset_files(ep_data);
            inputs.push_back(ep_model);
            RunDir rd = start_run(ep_out, "eap", args, ep_seed, inputs);
            EapOptions opts;
            opts.metric = ep_metric == "logit-diff" ? EapMetric::LogitDiffClean
                                                    : EapMetric::KlCorruptedRun;
            EdgeScoreTable scores = eap_scores(model, pick_split(ds, ep_split), opts);
            write_text_file(rd.file("scores.csv"), scores_to_csv(scores, model.graph()));
            const int k = ep_k >= 0 ? ep_k : model.graph().n_edges() / 10;
            Circuit c = eap_top_k(scores, model.graph(), k, model.config_hash());
            save_circuit(c, model.graph(), rd.file("circuit.json"));
            std::cout << "eap circuit: " << c.n_kept_edges() << " edges, sparsity "
                      << c.sparsity() << "\n";
            return 0;
        }

        if (*ev) {
            Dataset ds = load_dataset(ev_data);
            DisentangledTransformer model = load_model(ev_model);
            Circuit c = load_circuit(model.graph(), ev_circuit);
            std::vector<std::string> inputs = dataset_files(ev_data);
            inputs.push_back(ev_model);
            inputs.push_back(ev_circuit);
            RunDir rd = start_run(ev_out, "eval", args, 0, inputs);
            EvalOptions opts;
            opts.ablation = parse_ablation(ev_ablation);
            EvalReport rep =
                evaluate_circuit(model, c, pick_split(ds, ev_split), ds.task, ds.vocab, opts);
            eval_to_files(rep, rd);
            return 0;
        }

        if (*sw) {
            Dataset ds = load_dataset(sw_data);
            DisentangledTransformer model = load_model(sw_model);
            std::vector<std::string> inputs = dataset_files(sw_data);
            inputs.push_back(sw_model);
            RunDir rd = start_run(sw_out, "sweep", args, sw_seed, inputs);
            EvalOptions eopts;
            eopts.ablation = parse_ablation(sw_ablation);
            std::ostringstream csv;
            csv << "method,requested,achieved_sparsity,kl,exact_match,accuracy,logit_diff,"
                   "prob_diff\n";
            auto add_row = [&](const std::string& method, double requested, const Circuit& c) {
                EvalReport rep = evaluate_circuit(model, c, ds.val, ds.task, ds.vocab, eopts);
                csv << method << "," << requested << "," << rep.sparsity << "," << rep.kl << ","
                    << rep.exact_match << "," << rep.accuracy << "," << rep.logit_diff << ","
                    << rep.prob_diff << "\n";
            };
            if (sw_method == "edge-pruning") {
                std::sort(sw_sparsities.begin(), sw_sparsities.end());
                auto preset = preset_by_name(sw_preset);
                if (!preset) throw std::runtime_error("unknown preset: " + sw_preset);
                for (double s : sw_sparsities) {
                    PruneConfig cfg = *preset;
                    cfg.seed = sw_seed;
                    cfg.t_edge = static_cast<float>(s);
                    cfg.ablation = eopts.ablation;
                    PruneResult res = prune(model, ds.train, cfg);
                    add_row("edge-pruning", s, res.circuit);
                }
            } else if (sw_method == "eap") {
                std::sort(sw_sparsities.begin(), sw_sparsities.end());
                EdgeScoreTable scores = eap_scores(model, ds.train);
                for (double s : sw_sparsities) {
                    const int k = std::max(
                        0, static_cast<int>(std::lround((1.0 - s) * model.graph().n_edges())));
                    add_row("eap", s, eap_top_k(scores, model.graph(), k, model.config_hash()));
                }
            } else if (sw_method == "acdc") {
                std::sort(sw_taus.begin(), sw_taus.end());
                AcdcOptions opts;
                opts.ablation = eopts.ablation;
                for (double t : sw_taus)
                    add_row("acdc", t, acdc(model, ds.train, static_cast<float>(t), opts));
            } else {
                throw std::runtime_error("unknown sweep method: " + sw_method);
            }
            write_text_file(rd.file("frontier.csv"), csv.str());
            std::cout << csv.str();
            return 0;
        }

        if (*dot) {
            DisentangledTransformer model = load_model(dot_model);
            Circuit c = load_circuit(model.graph(), dot_circuit);
            RunDir rd = start_run(dot_out, "export-dot", args, 0, {dot_model, dot_circuit});
            write_text_file(rd.file("circuit.dot"), circuit_to_dot(c, model.graph()));
            std::cout << "dot written to " << rd.file("circuit.dot") << "\n";
            return 0;
        }

        if (*in) {
            DisentangledTransformer model = load_model(in_model);
            Circuit a = load_circuit(model.graph(), in_a);
            Circuit b = load_circuit(model.graph(), in_b);
            RunDir rd = start_run(in_out, "intersect", args, 0, {in_model, in_a, in_b});
            IntersectionResult res = circuit_intersection(model.graph(), a, b);
            save_circuit(res.circuit, model.graph(), rd.file("intersection.json"));
            json j;
            j["edges_a"] = a.n_kept_edges();
            j["edges_b"] = b.n_kept_edges();
            j["edges_intersection"] = res.circuit.n_kept_edges();
            j["overlap_ratio"] = res.overlap_ratio;
            j["chance_factor"] = res.chance_factor;
            write_text_file(rd.file("report.json"), j.dump(2));
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        if (*fa) {
            Dataset ds = load_dataset(fa_data);
            DisentangledTransformer model = load_model(fa_model);
            Circuit c = load_circuit(model.graph(), fa_circuit);
            std::vector<std::string> inputs = dataset_files(fa_data);
            inputs.push_back(fa_model);
            inputs.push_back(fa_circuit);
            RunDir rd = start_run(fa_out, "faithfulness-scatter", args, 0, inputs);
            std::vector<ExamplePair> split = pick_split(ds, fa_split);
            if (fa_limit > 0 && static_cast<int>(split.size()) > fa_limit) split.resize(fa_limit);
            std::vector<int> probes = c.active_edge_indices(model.graph());
            auto records = edge_faithfulness(model, c, split, probes);
            std::ostringstream csv;
            csv << "edge_index,src,dst,m_e,c_e\n";
            const ComputationalGraph& g = model.graph();
            for (const auto& r : records)
                csv << r.edge_index << "," << writer_name(g.edges[r.edge_index].src) << ","
                    << reader_name(g.edges[r.edge_index].dst) << "," << r.m_e << "," << r.c_e
                    << "\n";
            write_text_file(rd.file("scatter.csv"), csv.str());
            std::cout << "wrote " << records.size() << " rows to " << rd.file("scatter.csv")
                      << "\n";
            return 0;
        }

        if (*zoo) {
            CompiledModel cm = zoo_program == "xproportion" ? build_xproportion()
                               : zoo_program == "reverse"
                                   ? build_reverse()
                                   : throw std::runtime_error("unknown program: " + zoo_program);
            RunDir rd = start_run(zoo_out, "export-zoo", args, 0, {});
            save_model(cm.model, rd.file("model.json"));
            save_circuit(cm.ground_truth, cm.model.graph(), rd.file("ground_truth.json"));
            std::cout << "fixture written to " << rd.path << "\n";
            return 0;
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace edgeprune
