#include "dipe/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "dipe/error.hpp"

namespace dipe {

namespace {

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(std::string s) {
    auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::optional<double> parse_number(const std::string& cell) {
    const std::string t = trim(cell);
    if (t.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = t.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) return std::nullopt;
    return v;
}

std::string lower(std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

// Floor of T * fraction, tolerant to representation error (0.6 * 100 == 60).
std::size_t fraction_rows(std::size_t total, double fraction) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(total) * fraction + 1e-9));
}

}  // namespace

RawDataset load_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_csv: cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw IngestionError("load_csv: " + path.string() + " is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    std::vector<std::string> header = split_row(line);
    for (auto& h : header) h = trim(h);

    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        rows.push_back(split_row(line));
    }
    if (rows.empty()) throw IngestionError("load_csv: " + path.string() + " has a header but no data rows");

    const bool has_dates = lower(header.front()) == "date" || !parse_number(rows.front().front()).has_value();
    const std::size_t first_col = has_dates ? 1 : 0;
    if (header.size() <= first_col) throw IngestionError("load_csv: no numeric columns in " + path.string());

    RawDataset ds;
    ds.names.assign(header.begin() + static_cast<std::ptrdiff_t>(first_col), header.end());
    ds.values = Matrix(rows.size(), ds.names.size());
    if (has_dates) ds.timestamps.emplace();

    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& cells = rows[r];
        // Row numbers in messages are 1-based file lines (header is line 1).
        if (cells.size() != header.size()) {
            throw IngestionError("load_csv: row " + std::to_string(r + 2) + " has " + std::to_string(cells.size()) +
                                 " cells, header has " + std::to_string(header.size()));
        }
        if (has_dates) ds.timestamps->push_back(trim(cells.front()));
        for (std::size_t c = first_col; c < cells.size(); ++c) {
            const auto v = parse_number(cells[c]);
            if (!v || !std::isfinite(*v)) {
                throw IngestionError("load_csv: row " + std::to_string(r + 2) + ", column '" + header[c] +
                                     "': cannot parse '" + trim(cells[c]) + "' as a finite number");
            }
            ds.values(r, c - first_col) = *v;
        }
    }
    return ds;
}

SplitSpec SplitSpec::defaults_for(const std::filesystem::path& path) {
    const std::string name = path.filename().string();
    if (name.rfind("ETT", 0) == 0) return {0.6, 0.2, 0.2};
    return {0.7, 0.1, 0.2};
}

void SplitSpec::validate() const {
    if (!(train > 0 && val > 0 && test > 0)) throw ParameterError("split: fractions must be positive");
    if (std::abs(train + val + test - 1.0) > 1e-9) {
        throw ParameterError("split: fractions must sum to 1, got " + std::to_string(train + val + test));
    }
}

SplitName parse_split_name(const std::string& name) {
    if (name == "train") return SplitName::train;
    if (name == "val" || name == "validation") return SplitName::val;
    if (name == "test") return SplitName::test;
    throw ParameterError("unknown split '" + name + "' (expected train, val or test)");
}

const IndexRange& select(const SplitRanges& ranges, SplitName name) {
    switch (name) {
        case SplitName::train:
            return ranges.train;
        case SplitName::val:
            return ranges.val;
        case SplitName::test:
            break;
    }
    return ranges.test;
}

std::vector<std::size_t> window_starts(const IndexRange& targets, const ModelConfig& cfg, bool borrow_lookback) {
    // Window = input rows [s, s + L), target rows [s + L, s + L + L').
    const std::size_t first_target = borrow_lookback ? std::max(targets.begin, cfg.lookback)
                                                     : targets.begin + cfg.lookback;
    std::vector<std::size_t> starts;
    if (targets.end < cfg.horizon) return starts;
    const std::size_t last_target = targets.end - cfg.horizon;
    for (std::size_t t = first_target; t <= last_target; ++t) starts.push_back(t - cfg.lookback);
    return starts;
}

SplitRanges split(const RawDataset& data, const SplitSpec& spec, const ModelConfig& cfg, bool borrow_lookback) {
    spec.validate();
    const std::size_t total = data.rows();
    const std::size_t train_end = fraction_rows(total, spec.train);
    const std::size_t test_rows = fraction_rows(total, spec.test);
    if (train_end + test_rows > total) throw DataError("split: fractions exceed the series length");
    const std::size_t test_begin = total - test_rows;

    SplitRanges ranges{{0, train_end}, {train_end, test_begin}, {test_begin, total}};
    const std::pair<const char*, const IndexRange*> named[] = {
        {"train", &ranges.train}, {"validation", &ranges.val}, {"test", &ranges.test}};
    for (const auto& [name, range] : named) {
        if (window_starts(*range, cfg, borrow_lookback).empty()) {
            throw DataError(std::string("split: ") + name + " rows [" + std::to_string(range->begin) + ", " +
                            std::to_string(range->end) + ") admit no window with lookback " +
                            std::to_string(cfg.lookback) + " and horizon " + std::to_string(cfg.horizon));
        }
    }
    return ranges;
}

Standardizer fit_standardizer(const RawDataset& data, const IndexRange& rows) {
    if (rows.size() == 0 || rows.end > data.rows()) throw DataError("fit_standardizer: empty or invalid row range");
    const std::size_t channels = data.channels();
    Standardizer s{std::vector<double>(channels, 0.0), std::vector<double>(channels, 0.0)};
    const double n = static_cast<double>(rows.size());
    for (std::size_t c = 0; c < channels; ++c) {
        double sum = 0.0;
        for (std::size_t r = rows.begin; r < rows.end; ++r) sum += data.values(r, c);
        const double mean = sum / n;
        double sq = 0.0;
        for (std::size_t r = rows.begin; r < rows.end; ++r) {
            const double d = data.values(r, c) - mean;
            sq += d * d;
        }
        const double sd = std::sqrt(sq / n);
        if (!(sd > 0.0)) {
            const std::string name = c < data.names.size() ? data.names[c] : std::to_string(c);
            throw DataError("fit_standardizer: channel '" + name + "' is constant over the training rows");
        }
        s.mean[c] = mean;
        s.std[c] = sd;
    }
    return s;
}

Matrix window_input(const RawDataset& data, const Standardizer& scaler, std::size_t start, std::size_t length) {
    if (start + length > data.rows()) throw DimensionError("window_input: window runs past the end of the series");
    Matrix m(data.channels(), length);
    for (std::size_t c = 0; c < data.channels(); ++c) {
        for (std::size_t i = 0; i < length; ++i) m(c, i) = scaler.apply(c, data.values(start + i, c));
    }
    return m;
}

WindowIterator::WindowIterator(const RawDataset& data, const IndexRange& targets, const Standardizer& scaler,
                               const ModelConfig& cfg, std::size_t batch_size, bool shuffle, std::uint64_t seed,
                               bool borrow_lookback)
    : data_(&data),
      scaler_(&scaler),
      lookback_(cfg.lookback),
      horizon_(cfg.horizon),
      batch_size_(batch_size),
      order_(window_starts(targets, cfg, borrow_lookback)) {
    if (batch_size == 0) throw ParameterError("windows: batch size must be positive");
    if (targets.end > data.rows()) throw DimensionError("windows: range extends past the series");
    if (order_.empty()) throw DataError("windows: range admits no window");
    if (scaler.mean.size() != data.channels()) throw DimensionError("windows: standardizer channel count mismatch");
    if (shuffle) {
        std::mt19937_64 rng(seed);
        std::shuffle(order_.begin(), order_.end(), rng);
    }
}

std::optional<WindowBatch> WindowIterator::next() {
    if (cursor_ >= order_.size()) return std::nullopt;
    const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
    WindowBatch batch;
    for (; cursor_ < end; ++cursor_) {
        const std::size_t start = order_[cursor_];
        batch.inputs.push_back(window_input(*data_, *scaler_, start, lookback_));
        batch.targets.push_back(window_input(*data_, *scaler_, start + lookback_, horizon_));
        batch.starts.push_back(start);
    }
    return batch;
}

WindowIterator windows(const RawDataset& data, const IndexRange& targets, const Standardizer& scaler,
                       const ModelConfig& cfg, std::size_t batch_size, bool shuffle, std::uint64_t seed,
                       bool borrow_lookback) {
    return WindowIterator(data, targets, scaler, cfg, batch_size, shuffle, seed, borrow_lookback);
}

PreparedData prepare_data(RawDataset raw, const SplitSpec& spec, const ModelConfig& cfg, bool borrow_lookback) {
    if (raw.channels() != cfg.channels) {
        throw DimensionError("data has " + std::to_string(raw.channels()) + " channels, model expects " +
                             std::to_string(cfg.channels));
    }
    PreparedData out;
    out.ranges = split(raw, spec, cfg, borrow_lookback);
    out.scaler = fit_standardizer(raw, out.ranges.train);
    out.raw = std::move(raw);
    out.borrow_lookback = borrow_lookback;
    return out;
}

}  // namespace dipe
