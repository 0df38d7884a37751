#pragma once

#include <string>
#include <vector>

#include "sfm/rng.hpp"
#include "sfm/types.hpp"

namespace sfm {

/// Ordered symbol table; index <-> symbol is bijective and the ordering is
/// persisted in the dataset manifest.
struct Vocab {
    std::string symbols;

    int size() const { return static_cast<int>(symbols.size()); }
    int index_of(char c) const {
        const auto p = symbols.find(c);
        return p == std::string::npos ? -1 : static_cast<int>(p);
    }
    char symbol_of(int i) const { return symbols.at(static_cast<size_t>(i)); }

    /// 26 lowercase letters plus the whitespace token, n = 27.
    static Vocab lowercase_alpha_space() { return Vocab{"abcdefghijklmnopqrstuvwxyz "}; }
};

enum class DatasetKind { SwissRoll, Bitmap, CharSeq };

const char* to_string(DatasetKind k);

/// Immutable after load; concurrent readers are safe. `targets` stacks one
/// valid ProbMatrix (D rows of n) per item; discrete kinds also keep the raw
/// class indices.
struct Dataset {
    DatasetKind kind = DatasetKind::SwissRoll;
    int n = 0;
    int D = 0;
    Mat targets;              // (count * D) x n
    Eigen::MatrixXi indices;  // count x D, discrete kinds only
    Vocab vocab;              // charseq only
    int height = 0, width = 0;  // bitmap only
    uint64_t seed = 0;
    std::string source;
    std::vector<int> train_idx, val_idx, test_idx;

    Eigen::Index count() const { return D > 0 ? targets.rows() / D : 0; }
    Mat targets_for(const std::vector<int>& items) const;
    VecI indices_for(const std::vector<int>& items) const;  // stacked, size*D
};

/// Disjoint, seed-stable splits by shuffled index; whatever the train and
/// val fractions leave goes to test.
void split_dataset(Dataset& ds, double train_frac, double val_frac, uint64_t seed);

/// `count` points of a spiral projected into the interior of the 2-simplex;
/// the third coordinate is 1 - mu1 - mu2 and every coordinate stays >= margin.
Dataset gen_swissroll(int count, double margin, uint64_t seed, double turns = 1.5,
                      double noise = 0.0);

// --- bitmaps ------------------------------------------------------------------
//
// File format "SFMB": 4-byte magic, u32 height, u32 width, u32 count
// (little-endian), then per image ceil(h*w/8) bytes of row-major pixels,
// most significant bit first within each byte.

struct BitmapSet {
    int height = 0, width = 0;
    std::vector<std::vector<uint8_t>> images;  // 0/1 per pixel, row-major
};

void save_bitmaps(const std::string& path, const BitmapSet& set);
BitmapSet load_bitmap_file(const std::string& path);

/// Block majority vote; ties break to background (0). 28x28 -> 8x8 uses
/// alternating 3- and 4-pixel blocks.
BitmapSet downsample_majority(const BitmapSet& set, int out_h, int out_w);

/// Rejects pixel values outside {0, 1}.
Dataset dataset_from_bitmaps(const BitmapSet& set, const std::string& source);
Dataset load_bitmaps(const std::string& path);

// --- character sequences ---------------------------------------------------------

/// Filters raw bytes to the 27-symbol alphabet (uppercase folded, any
/// whitespace to the space token, everything else dropped) and cuts
/// fixed-length windows over the stream.
Dataset load_charseq(const std::string& path, int seq_len, int stride = 1);
Dataset charseq_from_string(const std::string& text, int seq_len, int stride = 1,
                            const std::string& source = "<memory>");

// --- encoding ---------------------------------------------------------------------

/// Exact one-hot rows (simplex vertices), D x n.
Mat encode_onehot(const VecI& classes, int n);

/// Inverse of encode_onehot on one-hot input; argmax with lowest-index ties.
VecI decode_classes(const Mat& prob_rows);

// --- manifests and sample output files ----------------------------------------------

void write_manifest(const std::string& path, const Dataset& ds);

/// Raw simplex coordinates, one sample per line, D*n lossless columns.
void write_simplex_csv(const std::string& path, const Mat& prob_rows, int D);
Mat read_simplex_csv(const std::string& path, int D, int n);

/// Packed grid file plus a tiled PGM contact sheet.
void write_bitmap_samples(const std::string& packed_path, const std::string& pgm_path,
                          const VecI& classes, int height, int width);

/// One line of vocabulary symbols per sample.
void write_charseq_samples(const std::string& path, const VecI& classes, int D, const Vocab& vocab);
std::vector<std::string> read_text_lines(const std::string& path);

}  // namespace sfm
