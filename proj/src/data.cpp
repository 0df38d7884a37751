#include "sfm/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "sfm/config.hpp"
#include "sfm/csv.hpp"

namespace sfm {

const char* to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::SwissRoll: return "swissroll";
        case DatasetKind::Bitmap: return "bitmap";
        case DatasetKind::CharSeq: return "charseq";
    }
    return "?";
}

Mat Dataset::targets_for(const std::vector<int>& items) const {
    Mat out(static_cast<Eigen::Index>(items.size()) * D, n);
    for (size_t i = 0; i < items.size(); ++i)
        out.middleRows(static_cast<Eigen::Index>(i) * D, D) =
            targets.middleRows(static_cast<Eigen::Index>(items[i]) * D, D);
    return out;
}

VecI Dataset::indices_for(const std::vector<int>& items) const {
    VecI out(static_cast<Eigen::Index>(items.size()) * D);
    for (size_t i = 0; i < items.size(); ++i)
        out.segment(static_cast<Eigen::Index>(i) * D, D) = indices.row(items[i]).transpose();
    return out;
}

void split_dataset(Dataset& ds, double train_frac, double val_frac, uint64_t seed) {
    if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0 + 1e-12)
        throw std::invalid_argument("split_dataset: bad fractions");
    const int count = static_cast<int>(ds.count());
    std::vector<int> order(count);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (int i = count - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
    const int n_train = static_cast<int>(std::round(train_frac * count));
    const int n_val = static_cast<int>(std::round(val_frac * count));
    ds.train_idx.assign(order.begin(), order.begin() + std::min(n_train, count));
    ds.val_idx.assign(order.begin() + std::min(n_train, count),
                      order.begin() + std::min(n_train + n_val, count));
    ds.test_idx.assign(order.begin() + std::min(n_train + n_val, count), order.end());
}

Dataset gen_swissroll(int count, double margin, uint64_t seed, double turns, double noise) {
    if (count < 1) throw std::invalid_argument("gen_swissroll: count must be >= 1");
    if (margin <= 0 || margin >= 1.0 / 3.0)
        throw std::invalid_argument("gen_swissroll: margin must lie in (0, 1/3)");
    Rng rng(seed);
    Mat plane(count, 2);
    for (int i = 0; i < count; ++i) {
        const double theta = 1.5 * M_PI + 2.0 * M_PI * turns * rng.uniform();
        plane(i, 0) = theta * std::cos(theta) + noise * rng.normal();
        plane(i, 1) = theta * std::sin(theta) + noise * rng.normal();
    }
    // normalize each axis to [0,1], then shrink jointly so that
    // mu1 + mu2 <= 1 - margin holds with coordinates floored at margin
    for (int c = 0; c < 2; ++c) {
        const double lo = plane.col(c).minCoeff(), hi = plane.col(c).maxCoeff();
        plane.col(c) = (plane.col(c).array() - lo) / std::max(hi - lo, 1e-300);
    }
    const double span = std::max(1.0, (plane.col(0) + plane.col(1)).maxCoeff());
    Dataset ds;
    ds.kind = DatasetKind::SwissRoll;
    ds.n = 3;
    ds.D = 1;
    ds.seed = seed;
    ds.source = "generated";
    ds.targets.resize(count, 3);
    for (int i = 0; i < count; ++i) {
        const double m1 = margin + (1.0 - 3.0 * margin) * plane(i, 0) / span;
        const double m2 = margin + (1.0 - 3.0 * margin) * plane(i, 1) / span;
        ds.targets(i, 0) = m1;
        ds.targets(i, 1) = m2;
        ds.targets(i, 2) = 1.0 - m1 - m2;
    }
    ds.train_idx.resize(count);
    std::iota(ds.train_idx.begin(), ds.train_idx.end(), 0);
    return ds;
}

// --- bitmaps -------------------------------------------------------------------

namespace {

constexpr char kBitmapMagic[4] = {'S', 'F', 'M', 'B'};

void write_u32le(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t read_u32le(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

}  // namespace

void save_bitmaps(const std::string& path, const BitmapSet& set) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write bitmaps: " + path);
    os.write(kBitmapMagic, 4);
    write_u32le(os, static_cast<uint32_t>(set.height));
    write_u32le(os, static_cast<uint32_t>(set.width));
    write_u32le(os, static_cast<uint32_t>(set.images.size()));
    const int npx = set.height * set.width;
    const int nbytes = (npx + 7) / 8;
    for (const auto& img : set.images) {
        if (static_cast<int>(img.size()) != npx)
            throw std::invalid_argument("save_bitmaps: image size mismatch");
        std::vector<uint8_t> packed(nbytes, 0);
        for (int p = 0; p < npx; ++p) {
            if (img[p] > 1) throw std::invalid_argument("save_bitmaps: non-binary pixel value");
            if (img[p]) packed[p / 8] |= static_cast<uint8_t>(0x80u >> (p % 8));
        }
        os.write(reinterpret_cast<const char*>(packed.data()), nbytes);
    }
    if (!os) throw std::runtime_error("bitmap write failed: " + path);
}

BitmapSet load_bitmap_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read bitmaps: " + path);
    char magic[4];
    is.read(magic, 4);
    if (std::memcmp(magic, kBitmapMagic, 4) != 0)
        throw std::runtime_error("bad bitmap magic: " + path);
    BitmapSet set;
    set.height = static_cast<int>(read_u32le(is));
    set.width = static_cast<int>(read_u32le(is));
    const uint32_t count = read_u32le(is);
    const int npx = set.height * set.width;
    const int nbytes = (npx + 7) / 8;
    set.images.resize(count);
    std::vector<uint8_t> packed(nbytes);
    for (uint32_t i = 0; i < count; ++i) {
        is.read(reinterpret_cast<char*>(packed.data()), nbytes);
        set.images[i].resize(npx);
        for (int p = 0; p < npx; ++p)
            set.images[i][p] = (packed[p / 8] >> (7 - p % 8)) & 1u;
    }
    if (!is) throw std::runtime_error("bitmap read failed: " + path);
    return set;
}

BitmapSet downsample_majority(const BitmapSet& set, int out_h, int out_w) {
    if (out_h < 1 || out_h > set.height || out_w < 1 || out_w > set.width)
        throw std::invalid_argument("downsample_majority: bad output size");
    // block boundaries by even division of the index range
    auto bound = [](int i, int out, int in) { return (i * in) / out; };
    BitmapSet out;
    out.height = out_h;
    out.width = out_w;
    out.images.reserve(set.images.size());
    for (const auto& img : set.images) {
        std::vector<uint8_t> o(static_cast<size_t>(out_h) * out_w, 0);
        for (int r = 0; r < out_h; ++r) {
            for (int c = 0; c < out_w; ++c) {
                int ones = 0, total = 0;
                for (int y = bound(r, out_h, set.height); y < bound(r + 1, out_h, set.height); ++y)
                    for (int x = bound(c, out_w, set.width); x < bound(c + 1, out_w, set.width); ++x) {
                        ones += img[static_cast<size_t>(y) * set.width + x];
                        ++total;
                    }
                o[static_cast<size_t>(r) * out_w + c] = (2 * ones > total) ? 1 : 0;
            }
        }
        out.images.push_back(std::move(o));
    }
    return out;
}

Dataset dataset_from_bitmaps(const BitmapSet& set, const std::string& source) {
    Dataset ds;
    ds.kind = DatasetKind::Bitmap;
    ds.n = 2;
    ds.D = set.height * set.width;
    ds.height = set.height;
    ds.width = set.width;
    ds.source = source;
    const int count = static_cast<int>(set.images.size());
    ds.indices.resize(count, ds.D);
    ds.targets.resize(static_cast<Eigen::Index>(count) * ds.D, 2);
    ds.targets.setZero();
    for (int i = 0; i < count; ++i) {
        for (int p = 0; p < ds.D; ++p) {
            const uint8_t v = set.images[i][p];
            if (v > 1) throw std::invalid_argument("dataset_from_bitmaps: non-binary pixel value");
            ds.indices(i, p) = v;
            ds.targets(static_cast<Eigen::Index>(i) * ds.D + p, v) = 1.0;
        }
    }
    ds.train_idx.resize(count);
    std::iota(ds.train_idx.begin(), ds.train_idx.end(), 0);
    return ds;
}

Dataset load_bitmaps(const std::string& path) {
    return dataset_from_bitmaps(load_bitmap_file(path), path);
}

// --- character sequences -----------------------------------------------------------

namespace {

std::string filter_to_alphabet(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    for (const char ch : raw) {
        const unsigned char u = static_cast<unsigned char>(ch);
        if (u >= 'a' && u <= 'z') out.push_back(ch);
        else if (u >= 'A' && u <= 'Z') out.push_back(static_cast<char>(u - 'A' + 'a'));
        else if (std::isspace(u)) out.push_back(' ');
    }
    return out;
}

}  // namespace

Dataset charseq_from_string(const std::string& text, int seq_len, int stride,
                            const std::string& source) {
    if (seq_len < 1 || stride < 1) throw std::invalid_argument("charseq: bad seq_len/stride");
    const std::string stream = filter_to_alphabet(text);
    const Vocab vocab = Vocab::lowercase_alpha_space();
    const int L = static_cast<int>(stream.size());
    if (L < seq_len) throw std::invalid_argument("charseq: stream shorter than seq_len");
    const int count = (L - seq_len) / stride + 1;

    Dataset ds;
    ds.kind = DatasetKind::CharSeq;
    ds.vocab = vocab;
    ds.n = vocab.size();
    ds.D = seq_len;
    ds.source = source;
    ds.indices.resize(count, seq_len);
    ds.targets.resize(static_cast<Eigen::Index>(count) * seq_len, ds.n);
    ds.targets.setZero();
    for (int i = 0; i < count; ++i) {
        for (int d = 0; d < seq_len; ++d) {
            const int idx = vocab.index_of(stream[static_cast<size_t>(i) * stride + d]);
            ds.indices(i, d) = idx;
            ds.targets(static_cast<Eigen::Index>(i) * seq_len + d, idx) = 1.0;
        }
    }
    ds.train_idx.resize(count);
    std::iota(ds.train_idx.begin(), ds.train_idx.end(), 0);
    return ds;
}

Dataset load_charseq(const std::string& path, int seq_len, int stride) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read text corpus: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return charseq_from_string(ss.str(), seq_len, stride, path);
}

// --- encoding -----------------------------------------------------------------------

Mat encode_onehot(const VecI& classes, int n) {
    Mat out = Mat::Zero(classes.size(), n);
    for (Eigen::Index r = 0; r < classes.size(); ++r) {
        if (classes[r] < 0 || classes[r] >= n)
            throw std::invalid_argument("encode_onehot: class index out of range");
        out(r, classes[r]) = 1.0;
    }
    return out;
}

VecI decode_classes(const Mat& prob_rows) {
    VecI out(prob_rows.rows());
    for (Eigen::Index r = 0; r < prob_rows.rows(); ++r) {
        int best = 0;
        for (Eigen::Index c = 1; c < prob_rows.cols(); ++c)
            if (prob_rows(r, c) > prob_rows(r, best)) best = static_cast<int>(c);
        out[r] = best;
    }
    return out;
}

// --- manifests and sample files -------------------------------------------------------

void write_manifest(const std::string& path, const Dataset& ds) {
    nlohmann::json j;
    j["kind"] = to_string(ds.kind);
    j["n"] = ds.n;
    j["D"] = ds.D;
    j["count"] = ds.count();
    j["seed"] = ds.seed;
    j["source"] = ds.source;
    j["splits"] = {{"train", ds.train_idx.size()}, {"val", ds.val_idx.size()}, {"test", ds.test_idx.size()}};
    if (ds.kind == DatasetKind::Bitmap) {
        j["height"] = ds.height;
        j["width"] = ds.width;
    }
    if (ds.kind == DatasetKind::CharSeq) j["vocab"] = ds.vocab.symbols;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write manifest: " + path);
    os << j.dump(2) << '\n';
}

void write_simplex_csv(const std::string& path, const Mat& prob_rows, int D) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write samples: " + path);
    const Eigen::Index B = prob_rows.rows() / D;
    const Eigen::Index n = prob_rows.cols();
    os << "sample";
    for (int d = 0; d < D; ++d)
        for (Eigen::Index c = 0; c < n; ++c) os << ",mu_" << d << '_' << c;
    os << '\n';
    for (Eigen::Index b = 0; b < B; ++b) {
        os << b;
        for (int d = 0; d < D; ++d)
            for (Eigen::Index c = 0; c < n; ++c)
                os << ',' << csvfmt::num_exact(prob_rows(b * D + d, c));
        os << '\n';
    }
}

Mat read_simplex_csv(const std::string& path, int D, int n) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read samples: " + path);
    std::string line;
    std::getline(is, line);  // header
    std::vector<double> values;
    Eigen::Index rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');  // sample index
        while (std::getline(ss, cell, ',')) values.push_back(std::stod(cell));
        ++rows;
    }
    if (values.size() != static_cast<size_t>(rows) * D * n)
        throw std::runtime_error("sample CSV shape mismatch: " + path);
    Mat out(rows * D, n);
    size_t k = 0;
    for (Eigen::Index b = 0; b < rows; ++b)
        for (int d = 0; d < D; ++d)
            for (int c = 0; c < n; ++c) out(b * D + d, c) = values[k++];
    return out;
}

void write_bitmap_samples(const std::string& packed_path, const std::string& pgm_path,
                          const VecI& classes, int height, int width) {
    const int D = height * width;
    const Eigen::Index B = classes.size() / D;
    BitmapSet set;
    set.height = height;
    set.width = width;
    set.images.resize(B);
    for (Eigen::Index b = 0; b < B; ++b) {
        set.images[b].resize(D);
        for (int p = 0; p < D; ++p) set.images[b][p] = static_cast<uint8_t>(classes[b * D + p]);
    }
    save_bitmaps(packed_path, set);

    // tiled contact sheet, black background, one cell per sample
    const int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(B))));
    const int sheet_h = grid * height, sheet_w = grid * width;
    std::vector<uint8_t> sheet(static_cast<size_t>(sheet_h) * sheet_w, 0);
    for (Eigen::Index b = 0; b < B; ++b) {
        const int gr = static_cast<int>(b) / grid, gc = static_cast<int>(b) % grid;
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c)
                sheet[static_cast<size_t>(gr * height + r) * sheet_w + gc * width + c] =
                    set.images[b][static_cast<size_t>(r) * width + c] ? 255 : 0;
    }
    std::ofstream os(pgm_path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write PGM: " + pgm_path);
    os << "P5\n" << sheet_w << ' ' << sheet_h << "\n255\n";
    os.write(reinterpret_cast<const char*>(sheet.data()), static_cast<std::streamsize>(sheet.size()));
}

void write_charseq_samples(const std::string& path, const VecI& classes, int D, const Vocab& vocab) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write samples: " + path);
    const Eigen::Index B = classes.size() / D;
    for (Eigen::Index b = 0; b < B; ++b) {
        std::string line(static_cast<size_t>(D), '?');
        for (int d = 0; d < D; ++d) line[d] = vocab.symbol_of(classes[b * D + d]);
        os << line << '\n';
    }
}

std::vector<std::string> read_text_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    return lines;
}

Dataset load_dataset(const RunConfig& cfg) {
    Dataset ds;
    if (cfg.dataset == "swissroll") {
        ds = gen_swissroll(cfg.swiss_count, cfg.swiss_margin, cfg.seed, cfg.swiss_turns,
                           cfg.swiss_noise);
        if (cfg.swiss_discretize) {
            ds.indices.resize(ds.count(), 1);
            ds.indices.col(0) = decode_classes(ds.targets);
            ds.targets = encode_onehot(ds.indices.col(0), ds.n);
        }
    } else if (cfg.dataset == "bitmap") {
        BitmapSet set = load_bitmap_file(cfg.data_path);
        if (cfg.down_h > 0 && cfg.down_w > 0) set = downsample_majority(set, cfg.down_h, cfg.down_w);
        ds = dataset_from_bitmaps(set, cfg.data_path);
    } else if (cfg.dataset == "charseq") {
        ds = load_charseq(cfg.data_path, cfg.seq_len, cfg.stride);
    } else {
        throw std::invalid_argument("unknown dataset kind: " + cfg.dataset);
    }
    ds.seed = cfg.seed;
    if (cfg.train_frac < 1.0 || cfg.val_frac > 0.0)
        split_dataset(ds, cfg.train_frac, cfg.val_frac, cfg.seed);
    return ds;
}

}  // namespace sfm
