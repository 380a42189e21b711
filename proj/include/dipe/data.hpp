#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dipe/matrix.hpp"
#include "dipe/model.hpp"

namespace dipe {

/// A multivariate series: `values` is T x C, rows are time steps.
struct RawDataset {
    std::vector<std::string> names;
    Matrix values;
    std::optional<std::vector<std::string>> timestamps;

    std::size_t rows() const noexcept { return values.rows; }
    std::size_t channels() const noexcept { return values.cols; }
};

/// Reads a comma-separated file with a header row. A leading column is
/// treated as opaque timestamps when its header is "date" (any case) or its
/// first data cell is not a number. Throws IngestionError naming the row and
/// column on ragged rows or unparseable cells, IoError if the file is missing.
RawDataset load_csv(const std::filesystem::path& path);

/// Chronological split fractions.
struct SplitSpec {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;

    /// 0.6/0.2/0.2 for files whose name starts with "ETT", 0.7/0.1/0.2 otherwise.
    static SplitSpec defaults_for(const std::filesystem::path& path);

    void validate() const;
};

/// Half-open range of row indices.
struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
    bool operator==(const IndexRange&) const = default;
};

/// Target-row ranges of the three splits.
struct SplitRanges {
    IndexRange train;
    IndexRange val;
    IndexRange test;
};

enum class SplitName { train, val, test };

SplitName parse_split_name(const std::string& name);
const IndexRange& select(const SplitRanges& ranges, SplitName name);

/// Partitions the target rows: train gets floor(T * train), test the last
/// floor(T * test) rows, validation the rest. With `borrow_lookback` a window
/// may take its input from rows before its split (targets never cross).
/// Throws DataError if any split admits no window.
SplitRanges split(const RawDataset& data, const SplitSpec& spec, const ModelConfig& cfg,
                  bool borrow_lookback = true);

/// Input start indices of every admissible window whose targets lie in `targets`.
std::vector<std::size_t> window_starts(const IndexRange& targets, const ModelConfig& cfg, bool borrow_lookback);

/// Per-channel z-scoring with statistics from training rows.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std;

    double apply(std::size_t channel, double v) const { return (v - mean[channel]) / std[channel]; }
    double invert(std::size_t channel, double v) const { return v * std[channel] + mean[channel]; }

    bool operator==(const Standardizer&) const = default;
};

/// Mean and population standard deviation over `rows`. Throws DataError for
/// an empty range or a constant channel.
Standardizer fit_standardizer(const RawDataset& data, const IndexRange& rows);

/// Standardized windows; inputs are C x L, targets C x L'.
struct WindowBatch {
    std::vector<Matrix> inputs;
    std::vector<Matrix> targets;
    std::vector<std::size_t> starts;  // row index of each window's first input step

    std::size_t size() const noexcept { return starts.size(); }
};

/// Input window starting at `start`, standardized, as C x L.
Matrix window_input(const RawDataset& data, const Standardizer& scaler, std::size_t start, std::size_t length);

/// Yields every admissible window of a range exactly once, in batches. The
/// order is ascending, or a permutation drawn from `seed` when shuffling.
class WindowIterator {
public:
    WindowIterator(const RawDataset& data, const IndexRange& targets, const Standardizer& scaler,
                   const ModelConfig& cfg, std::size_t batch_size, bool shuffle, std::uint64_t seed,
                   bool borrow_lookback = true);

    std::optional<WindowBatch> next();
    std::size_t window_count() const noexcept { return order_.size(); }

private:
    const RawDataset* data_;
    const Standardizer* scaler_;
    std::size_t lookback_;
    std::size_t horizon_;
    std::size_t batch_size_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
};

WindowIterator windows(const RawDataset& data, const IndexRange& targets, const Standardizer& scaler,
                       const ModelConfig& cfg, std::size_t batch_size, bool shuffle, std::uint64_t seed,
                       bool borrow_lookback = true);

/// A dataset ready for training: splits and train-split statistics.
struct PreparedData {
    RawDataset raw;
    SplitRanges ranges;
    Standardizer scaler;
    bool borrow_lookback = true;
};

PreparedData prepare_data(RawDataset raw, const SplitSpec& spec, const ModelConfig& cfg, bool borrow_lookback = true);

}  // namespace dipe
