#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "sfm/data.hpp"

namespace sfm {

/// Experiment description shared by the CLI subcommands. Every field maps
/// to a flag, and flags can also be bulk-loaded from a key = value config
/// file with [sections].
struct RunConfig {
    // flow variant: sfm (spherical geodesics), sfm_nopi (direct
    // statistical-manifold geodesics), linearfm (Euclidean simplex)
    std::string mode = "sfm";

    // dataset
    std::string dataset = "swissroll";  // swissroll | bitmap | charseq
    std::string data_path;
    int swiss_count = 1000;
    double swiss_margin = 0.02;
    double swiss_turns = 1.5;
    double swiss_noise = 0.0;
    bool swiss_discretize = false;  // replace roll points by one-hot argmax classes
    int seq_len = 16;
    int stride = 1;
    int down_h = 0, down_w = 0;  // optional bitmap majority-vote downsample
    double train_frac = 1.0;
    double val_frac = 0.0;

    // model
    int hidden = 128;
    int depth = 1;

    // optimizer
    double lr = 1e-3;
    int iters = 2000;
    int batch = 0;  // 0: full batch
    bool ot = false;
    double grad_clip = 10.0;
    int checkpoint_every = 0;
    int val_interval = 0;
    bool log_walltime = false;

    // sampler
    std::string sampler = "ode";  // ode | euler
    int euler_steps = 300;
    double rtol = 1e-5;
    double atol = 1e-5;
    int sample_count = 1000;
    std::string discretize = "sample";  // sample | argmax

    // likelihood
    double t_max = 0.995;
    int probes = 1;
    int nll_samples = 1;  // variational draws per datum
    int repeats = 1;      // whole-evaluation repeats for mean +/- std
    std::string divergence = "hutchinson";  // hutchinson | exact
    int chunk = 256;      // samples per batched integration
    double s_max = 10.0;  // BPC integration limit in s = -log(1-t)

    uint64_t seed = 0;
    std::string outdir = "out";
    int threads = 1;

    void validate() const {
        if (mode != "sfm" && mode != "sfm_nopi" && mode != "linearfm")
            throw std::invalid_argument("mode must be sfm | sfm_nopi | linearfm");
        if (dataset != "swissroll" && dataset != "bitmap" && dataset != "charseq")
            throw std::invalid_argument("dataset must be swissroll | bitmap | charseq");
        if (dataset != "swissroll" && data_path.empty())
            throw std::invalid_argument("dataset '" + dataset + "' needs --data");
        if (!data_path.empty() && !std::filesystem::exists(data_path))
            throw std::invalid_argument("data path does not exist: " + data_path);
        if (hidden < 2 || hidden % 2 != 0) throw std::invalid_argument("hidden must be even, >= 2");
        if (depth < 1) throw std::invalid_argument("depth must be >= 1");
        if (iters < 1) throw std::invalid_argument("iters must be >= 1");
        if (sampler != "ode" && sampler != "euler")
            throw std::invalid_argument("sampler must be ode | euler");
        if (euler_steps < 1) throw std::invalid_argument("euler_steps must be >= 1");
        if (t_max <= 0.0 || t_max >= 1.0) throw std::invalid_argument("t_max must lie in (0, 1)");
        if (probes < 1) throw std::invalid_argument("probes must be >= 1");
        if (nll_samples < 1 || repeats < 1)
            throw std::invalid_argument("nll_samples and repeats must be >= 1");
        if (divergence != "hutchinson" && divergence != "exact")
            throw std::invalid_argument("divergence must be hutchinson | exact");
        if (discretize != "sample" && discretize != "argmax")
            throw std::invalid_argument("discretize must be sample | argmax");
        if (chunk < 1) throw std::invalid_argument("chunk must be >= 1");
        if (threads < 1) throw std::invalid_argument("threads must be >= 1");
        if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0)
            throw std::invalid_argument("train/val fractions must be nonnegative, sum <= 1");
    }

    FlowKind kind() const { return flow_kind_from_string(mode); }
};

/// Builds the dataset the config describes (generation, load, optional
/// downsample, one-hot discretization of the roll, splits).
Dataset load_dataset(const RunConfig& cfg);

}  // namespace sfm
