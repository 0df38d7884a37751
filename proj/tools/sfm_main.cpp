#include <CLI11.hpp>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <thread>
#include <vector>

#include "sfm/config.hpp"
#include "sfm/csv.hpp"
#include "sfm/likelihood.hpp"
#include "sfm/sampler.hpp"
#include "sfm/training.hpp"
#include "sfm/verify.hpp"

namespace fs = std::filesystem;
using namespace sfm;

namespace {

void add_config_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->set_config("--config", "", "key = value config file (flat keys or [section] prefixes)");

    cmd->add_option("--mode,--model.mode", cfg.mode, "flow variant: sfm | sfm_nopi | linearfm")
        ->capture_default_str();
    cmd->add_option("--seed", cfg.seed, "root RNG seed")->capture_default_str();
    cmd->add_option("--outdir", cfg.outdir, "output directory")->capture_default_str();
    cmd->add_option("--threads", cfg.threads, "worker threads for per-sample evaluations")
        ->capture_default_str();

    cmd->add_option("--dataset,--data.kind", cfg.dataset, "swissroll | bitmap | charseq")
        ->capture_default_str();
    cmd->add_option("--data,--data.path", cfg.data_path, "input file for bitmap/charseq datasets");
    cmd->add_option("--swiss-count,--data.swiss_count", cfg.swiss_count, "swiss roll points")
        ->capture_default_str();
    cmd->add_option("--swiss-margin,--data.swiss_margin", cfg.swiss_margin,
                    "minimum simplex coordinate")
        ->capture_default_str();
    cmd->add_option("--swiss-turns,--data.swiss_turns", cfg.swiss_turns, "spiral turns")
        ->capture_default_str();
    cmd->add_option("--swiss-noise,--data.swiss_noise", cfg.swiss_noise, "spiral jitter")
        ->capture_default_str();
    cmd->add_flag("--swiss-discretize,--data.swiss_discretize", cfg.swiss_discretize,
                  "replace roll points by their one-hot argmax classes");
    cmd->add_option("--seq-len,--data.seq_len", cfg.seq_len, "character window length")
        ->capture_default_str();
    cmd->add_option("--stride,--data.stride", cfg.stride, "character window stride")
        ->capture_default_str();
    cmd->add_option("--down-h,--data.down_h", cfg.down_h, "bitmap downsample height (0: off)")
        ->capture_default_str();
    cmd->add_option("--down-w,--data.down_w", cfg.down_w, "bitmap downsample width (0: off)")
        ->capture_default_str();
    cmd->add_option("--train-frac,--data.train_frac", cfg.train_frac, "train split fraction")
        ->capture_default_str();
    cmd->add_option("--val-frac,--data.val_frac", cfg.val_frac, "validation split fraction")
        ->capture_default_str();

    cmd->add_option("--hidden,--model.hidden", cfg.hidden, "hidden width H")->capture_default_str();
    cmd->add_option("--depth,--model.depth", cfg.depth, "hidden layers in the head")
        ->capture_default_str();

    cmd->add_option("--lr,--optimizer.lr", cfg.lr, "Adam learning rate")->capture_default_str();
    cmd->add_option("--iters,--optimizer.iters", cfg.iters, "training iterations")
        ->capture_default_str();
    cmd->add_option("--batch,--optimizer.batch", cfg.batch, "batch size (0: full batch)")
        ->capture_default_str();
    cmd->add_flag("--ot,--optimizer.ot", cfg.ot, "optimal-transport pairing of noise and data");
    cmd->add_option("--grad-clip,--optimizer.grad_clip", cfg.grad_clip, "global gradient norm cap")
        ->capture_default_str();
    cmd->add_option("--checkpoint-every,--optimizer.checkpoint_every", cfg.checkpoint_every,
                    "checkpoint cadence in iterations (0: final only)")
        ->capture_default_str();
    cmd->add_option("--val-interval,--optimizer.val_interval", cfg.val_interval,
                    "validation cadence in iterations (0: off)")
        ->capture_default_str();
    cmd->add_flag("--log-walltime,--optimizer.log_walltime", cfg.log_walltime,
                  "record wall time in metrics (breaks byte-identical logs)");

    cmd->add_option("--sampler,--sampler.method", cfg.sampler, "ode | euler")->capture_default_str();
    cmd->add_option("--euler-steps,--sampler.euler_steps", cfg.euler_steps, "Euler step count")
        ->capture_default_str();
    cmd->add_option("--rtol,--sampler.rtol", cfg.rtol, "adaptive solver relative tolerance")
        ->capture_default_str();
    cmd->add_option("--atol,--sampler.atol", cfg.atol, "adaptive solver absolute tolerance")
        ->capture_default_str();
    cmd->add_option("--count,--sampler.count", cfg.sample_count, "samples to generate")
        ->capture_default_str();
    cmd->add_option("--discretize,--sampler.discretize", cfg.discretize,
                    "sample | argmax for discrete outputs")
        ->capture_default_str();

    cmd->add_option("--t-max,--likelihood.t_max", cfg.t_max, "variational timestep for one-hot data")
        ->capture_default_str();
    cmd->add_option("--probes,--likelihood.probes", cfg.probes, "Hutchinson probes per step")
        ->capture_default_str();
    cmd->add_option("--nll-samples,--likelihood.samples", cfg.nll_samples,
                    "variational draws per datum")
        ->capture_default_str();
    cmd->add_option("--repeats,--likelihood.repeats", cfg.repeats,
                    "full-evaluation repeats for mean/std")
        ->capture_default_str();
    cmd->add_option("--divergence,--likelihood.divergence", cfg.divergence, "hutchinson | exact")
        ->capture_default_str();
    cmd->add_option("--chunk,--likelihood.chunk", cfg.chunk, "samples per batched integration")
        ->capture_default_str();
    cmd->add_option("--s-max,--likelihood.s_max", cfg.s_max, "BPC integration limit")
        ->capture_default_str();
}

LikelihoodOptions likelihood_options(const RunConfig& cfg) {
    LikelihoodOptions lo;
    lo.method = cfg.divergence == "exact" ? DivMethod::Exact : DivMethod::Hutchinson;
    lo.probes = cfg.probes;
    lo.use_euler = cfg.sampler == "euler";
    lo.euler_steps = cfg.euler_steps;
    lo.rtol = cfg.rtol;
    lo.atol = cfg.atol;
    return lo;
}

std::vector<int> split_items(const Dataset& ds, const std::string& split) {
    if (split == "train") return ds.train_idx;
    if (split == "val") return ds.val_idx;
    if (split == "test") return ds.test_idx.empty() ? ds.train_idx : ds.test_idx;
    throw std::invalid_argument("split must be train | val | test");
}

int cmd_train(const RunConfig& cfg) {
    cfg.validate();
    Dataset ds = load_dataset(cfg);
    const Mat train_targets = ds.targets_for(ds.train_idx);
    Mat val_targets;
    if (!ds.val_idx.empty()) val_targets = ds.targets_for(ds.val_idx);

    fs::create_directories(cfg.outdir);
    FlowModel model(cfg.kind(), ds.n, ds.D, cfg.hidden, cfg.depth);

    TrainOptions topt;
    topt.iters = cfg.iters;
    topt.batch = cfg.batch;
    topt.ot = cfg.ot;
    topt.lr = cfg.lr;
    topt.grad_clip = cfg.grad_clip;
    topt.seed = cfg.seed;
    topt.metrics_path = cfg.outdir + "/metrics.csv";
    topt.checkpoint_path = cfg.outdir + "/model.ckpt";
    topt.checkpoint_every = cfg.checkpoint_every;
    topt.val_interval = cfg.val_interval;
    topt.log_walltime = cfg.log_walltime;

    const TrainResult res =
        train(model, train_targets, topt, val_targets.size() > 0 ? &val_targets : nullptr);
    write_manifest(cfg.outdir + "/manifest.json", ds);
    std::cout << "trained " << res.iters_run << " iterations, final loss "
              << csvfmt::num(res.final_loss) << "\ncheckpoint: " << topt.checkpoint_path
              << "\nmetrics:    " << topt.metrics_path << '\n';
    return 0;
}

int cmd_sample(const RunConfig& cfg, const std::string& checkpoint) {
    cfg.validate();
    FlowModel model = FlowModel::load(checkpoint);
    Dataset ds = load_dataset(cfg);
    if (ds.n != model.n() || ds.D != model.D())
        throw std::invalid_argument("checkpoint dimensions do not match the dataset");

    Rng root(cfg.seed);
    Rng prior_rng = root.fork(1);
    const Mat mu0 = sample_prior_batch(cfg.sample_count, model.D(), model.n(), prior_rng);
    const Mat out = cfg.sampler == "euler" ? sample_euler(model, mu0, cfg.euler_steps)
                                           : sample_ode(model, mu0, cfg.rtol, cfg.atol);

    fs::create_directories(cfg.outdir);
    write_simplex_csv(cfg.outdir + "/samples.csv", out, model.D());
    std::cout << "samples: " << cfg.outdir << "/samples.csv\n";

    const bool discrete = ds.indices.size() > 0;
    if (discrete) {
        Rng drng = root.fork(2);
        const VecI cls = discretize(
            out, drng, cfg.discretize == "argmax" ? DiscretizeMode::Argmax : DiscretizeMode::Sample);
        if (ds.kind == DatasetKind::Bitmap) {
            write_bitmap_samples(cfg.outdir + "/samples.sfmb", cfg.outdir + "/samples.pgm", cls,
                                 ds.height, ds.width);
            std::cout << "bitmaps: " << cfg.outdir << "/samples.sfmb, " << cfg.outdir
                      << "/samples.pgm\n";
        } else if (ds.kind == DatasetKind::CharSeq) {
            write_charseq_samples(cfg.outdir + "/samples.txt", cls, model.D(), ds.vocab);
            std::cout << "text:    " << cfg.outdir << "/samples.txt\n";
        }
    }
    return 0;
}

struct NllAggregate {
    double mean = 0.0;
    double stdev = 0.0;
};

std::vector<NLLReport> evaluate_nll(const FlowModel& model, const Dataset& ds,
                                    const std::vector<int>& items, const RunConfig& cfg,
                                    uint64_t stream) {
    const LikelihoodOptions lo = likelihood_options(cfg);
    const bool boundary = ds.indices.size() > 0;
    Rng root(cfg.seed);

    const int total = static_cast<int>(items.size());
    const int chunk = cfg.chunk;
    const int n_chunks = (total + chunk - 1) / chunk;
    std::vector<std::vector<NLLReport>> per_chunk(n_chunks);

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int c = next.fetch_add(1);
            if (c >= n_chunks) return;
            const int lo_i = c * chunk;
            const int hi_i = std::min(total, lo_i + chunk);
            std::vector<int> part(items.begin() + lo_i, items.begin() + hi_i);
            Rng rng = root.fork((stream << 20) + static_cast<uint64_t>(c) + 11);
            if (boundary) {
                const VecI delta = ds.indices_for(part);
                per_chunk[c] = nll_boundary(model, delta, cfg.t_max, cfg.nll_samples, lo, rng);
            } else {
                const Mat mu1 = ds.targets_for(part);
                per_chunk[c] = nll_interior(model, mu1, lo, rng);
            }
        }
    };
    if (cfg.threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < cfg.threads; ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::vector<NLLReport> all;
    all.reserve(total);
    for (auto& c : per_chunk)
        for (auto& r : c) all.push_back(std::move(r));
    return all;
}

int cmd_nll(const RunConfig& cfg, const std::string& checkpoint, const std::string& split) {
    cfg.validate();
    FlowModel model = FlowModel::load(checkpoint);
    Dataset ds = load_dataset(cfg);
    if (ds.n != model.n() || ds.D != model.D())
        throw std::invalid_argument("checkpoint dimensions do not match the dataset");
    const std::vector<int> items = split_items(ds, split);
    if (items.empty()) throw std::invalid_argument("selected split is empty");

    fs::create_directories(cfg.outdir);
    std::vector<double> repeat_means;
    std::vector<NLLReport> first_reports;
    for (int rep = 0; rep < cfg.repeats; ++rep) {
        auto reports = evaluate_nll(model, ds, items, cfg, static_cast<uint64_t>(rep) + 1);
        double mean = 0.0;
        for (const auto& r : reports) mean += r.nll();
        mean /= static_cast<double>(reports.size());
        repeat_means.push_back(mean);
        if (rep == 0) first_reports = std::move(reports);
    }
    write_nll_csv(cfg.outdir + "/nll.csv", first_reports);

    double mean = 0.0;
    for (const double m : repeat_means) mean += m;
    mean /= static_cast<double>(repeat_means.size());
    double var = 0.0;
    for (const double m : repeat_means) var += (m - mean) * (m - mean);
    const double stdev =
        repeat_means.size() > 1 ? std::sqrt(var / static_cast<double>(repeat_means.size() - 1)) : 0.0;

    std::cout << "NLL over " << items.size() << " samples (" << cfg.repeats
              << " repeats): " << csvfmt::num(mean) << " +/- " << csvfmt::num(stdev)
              << " nats\nreport: " << cfg.outdir << "/nll.csv\n";
    return 0;
}

int cmd_bpc(const RunConfig& cfg, const std::string& checkpoint, const std::string& split) {
    cfg.validate();
    FlowModel model = FlowModel::load(checkpoint);
    Dataset ds = load_dataset(cfg);
    if (ds.n != model.n() || ds.D != model.D())
        throw std::invalid_argument("checkpoint dimensions do not match the dataset");
    if (ds.indices.size() == 0)
        throw std::invalid_argument("BPC needs one-hot (discrete) data");
    const std::vector<int> items = split_items(ds, split);
    if (items.empty()) throw std::invalid_argument("selected split is empty");

    Rng rng = Rng(cfg.seed).fork(77);
    const Mat mu1 = ds.targets_for(items);
    const double value = bpc(model, mu1, cfg.s_max, cfg.rtol, cfg.atol, rng);
    std::cout << "BPC over " << items.size() << " samples: " << csvfmt::num(value) << " bits ("
              << "log2 n = " << csvfmt::num(std::log2(static_cast<double>(ds.n))) << ")\n";
    return 0;
}

int cmd_verify(const RunConfig& cfg) {
    VerifyOptions vo;
    vo.seed = cfg.seed;
    const auto results = run_verification(vo);
    const bool ok = print_verification(results, std::cout);
    std::cout << (ok ? "all invariants hold\n" : "invariant failures detected\n");
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"statistical flow matching on the categorical manifold"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string checkpoint;
    std::string split = "train";

    CLI::App* train_cmd = app.add_subcommand("train", "train a flow model");
    add_config_options(train_cmd, cfg);

    CLI::App* sample_cmd = app.add_subcommand("sample", "generate samples from a checkpoint");
    add_config_options(sample_cmd, cfg);
    sample_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();

    CLI::App* nll_cmd = app.add_subcommand("nll", "negative log-likelihood report");
    add_config_options(nll_cmd, cfg);
    nll_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    nll_cmd->add_option("--split", split, "train | val | test")->capture_default_str();

    CLI::App* bpc_cmd = app.add_subcommand("bpc", "bits-per-character estimate");
    add_config_options(bpc_cmd, cfg);
    bpc_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    bpc_cmd->add_option("--split", split, "train | val | test")->capture_default_str();

    CLI::App* verify_cmd = app.add_subcommand("verify", "run the numerical invariant suite");
    verify_cmd->add_option("--seed", cfg.seed, "RNG seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (app.got_subcommand(train_cmd)) return cmd_train(cfg);
        if (app.got_subcommand(sample_cmd)) return cmd_sample(cfg, checkpoint);
        if (app.got_subcommand(nll_cmd)) return cmd_nll(cfg, checkpoint, split);
        if (app.got_subcommand(bpc_cmd)) return cmd_bpc(cfg, checkpoint, split);
        if (app.got_subcommand(verify_cmd)) return cmd_verify(cfg);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
