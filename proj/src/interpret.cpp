#include "dipe/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "dipe/error.hpp"

namespace dipe {

namespace {

constexpr double kNormTolerance = 1e-9;
constexpr double kProbFloor = 1e-12;

void check_distribution(std::span<const double> p, const char* name) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw ParameterError(std::string("kl_divergence: ") + name + " has a negative or non-finite entry");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > kNormTolerance) {
        throw ParameterError(std::string("kl_divergence: ") + name + " sums to " + std::to_string(sum) + ", not 1");
    }
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

class CsvFile {
public:
    explicit CsvFile(std::filesystem::path path) : path_(std::move(path)), out_(path_, std::ios::binary) {
        if (!out_) throw IoError("cannot write " + path_.string());
    }
    std::ofstream& stream() { return out_; }
    void close() {
        out_.close();
        if (!out_) throw IoError("failed writing " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

void write_complex(std::ostream& out, Complex z) {
    out << ',' << num(z.real()) << ',' << num(z.imag()) << ',' << num(std::abs(z)) << ',' << num(std::arg(z));
}

}  // namespace

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size() || p.empty()) throw ParameterError("kl_divergence: vectors must be non-empty and equally long");
    check_distribution(p, "p");
    check_distribution(q, "q");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        acc += p[i] * std::log(p[i] / std::max(q[i], kProbFloor));
    }
    return std::max(acc, 0.0);
}

double jsd(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ParameterError("jsd: vectors must be equally long");
    std::vector<double> mid(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) mid[i] = 0.5 * (p[i] + q[i]);
    return std::sqrt(0.5 * kl_divergence(p, mid) + 0.5 * kl_divergence(q, mid));
}

Matrix jsd_matrix(const ModelParams& params, const ModelConfig& cfg) {
    if (!cfg.has_router() || !params.router) {
        throw UnsupportedConfigError("jsd_matrix: a single-expert model has no router");
    }
    params.validate(cfg);
    const Matrix r = router_normalize(*params.router);
    std::vector<std::vector<double>> cols(cfg.channels, std::vector<double>(cfg.rank));
    for (std::size_t c = 0; c < cfg.channels; ++c) {
        for (std::size_t m = 0; m < cfg.rank; ++m) cols[c][m] = r(m, c);
    }
    Matrix out(cfg.channels, cfg.channels, 0.0);
    for (std::size_t a = 0; a < cfg.channels; ++a) {
        for (std::size_t b = a + 1; b < cfg.channels; ++b) {
            const double d = jsd(cols[a], cols[b]);
            out(a, b) = d;
            out(b, a) = d;
        }
    }
    return out;
}

std::vector<double> equivalent_kernel(const EffectiveChannelWeights& w, const ModelConfig& cfg) {
    if (w.ifm_weight.size() != cfg.freq_pad()) {
        throw DimensionError("equivalent_kernel: expected " + std::to_string(cfg.freq_pad()) + " IFM bins, got " +
                             std::to_string(w.ifm_weight.size()));
    }
    return RealFftPlan(cfg.pad_length()).inverse(w.ifm_weight);
}

void write_jsd_csv(const Matrix& distances, const std::vector<std::string>& names, const std::filesystem::path& path) {
    CsvFile f(path);
    auto& out = f.stream();
    out << "channel";
    for (std::size_t c = 0; c < distances.cols; ++c) {
        out << ',' << csv_field(c < names.size() ? names[c] : std::to_string(c));
    }
    out << '\n';
    for (std::size_t r = 0; r < distances.rows; ++r) {
        out << csv_field(r < names.size() ? names[r] : std::to_string(r));
        for (std::size_t c = 0; c < distances.cols; ++c) out << ',' << num(distances(r, c));
        out << '\n';
    }
    f.close();
}

std::vector<std::filesystem::path> export_weights(const Checkpoint& ckpt, const std::filesystem::path& dir) {
    const auto& cfg = ckpt.config;
    ckpt.params.validate(cfg);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    std::vector<std::filesystem::path> written;
    for (std::size_t m = 0; m < ckpt.params.experts.size(); ++m) {
        const auto& e = ckpt.params.experts[m];
        const std::string suffix = "_expert" + std::to_string(m) + ".csv";

        CsvFile sfa(dir / ("sfa" + suffix));
        sfa.stream() << "bin,gain\n";
        for (std::size_t k = 0; k < e.sfa_gain.size(); ++k) sfa.stream() << k << ',' << num(e.sfa_gain[k]) << '\n';
        sfa.close();
        written.push_back(dir / ("sfa" + suffix));

        CsvFile sta(dir / ("sta" + suffix));
        sta.stream() << "time,gain\n";
        for (std::size_t i = 0; i < e.sta_gain.size(); ++i) sta.stream() << i << ',' << num(e.sta_gain[i]) << '\n';
        sta.close();
        written.push_back(dir / ("sta" + suffix));

        CsvFile ifm(dir / ("ifm" + suffix));
        ifm.stream() << "bin,re,im,magnitude,phase,bias_re,bias_im,bias_magnitude,bias_phase\n";
        for (std::size_t k = 0; k < e.ifm_weight.size(); ++k) {
            ifm.stream() << k;
            write_complex(ifm.stream(), e.ifm_weight[k]);
            write_complex(ifm.stream(), e.ifm_bias[k]);
            ifm.stream() << '\n';
        }
        ifm.close();
        written.push_back(dir / ("ifm" + suffix));
    }

    if (ckpt.params.router) {
        const Matrix r = router_normalize(*ckpt.params.router);
        CsvFile router(dir / "router.csv");
        auto& out = router.stream();
        out << "expert";
        for (std::size_t c = 0; c < r.cols; ++c) {
            out << ',' << csv_field(c < ckpt.channel_names.size() ? ckpt.channel_names[c] : std::to_string(c));
        }
        out << '\n';
        for (std::size_t m = 0; m < r.rows; ++m) {
            out << m;
            for (std::size_t c = 0; c < r.cols; ++c) out << ',' << num(r(m, c));
            out << '\n';
        }
        router.close();
        written.push_back(dir / "router.csv");

        write_jsd_csv(jsd_matrix(ckpt.params, cfg), ckpt.channel_names, dir / "jsd.csv");
        written.push_back(dir / "jsd.csv");
    }
    return written;
}

}  // namespace dipe
