#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dipe/error.hpp"
#include "dipe/trainer.hpp"

namespace dipe {

namespace {

using Json = nlohmann::ordered_json;

constexpr int kFormatVersion = 1;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool is_scalar(const Json& j) { return !j.is_object() && !j.is_array(); }

// nlohmann's dump uses shortest round-trip output; this writer pins 17 digits.
void emit(const Json& j, std::ostream& out, int indent) {
    const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
    const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
    if (j.is_object()) {
        if (j.empty()) {
            out << "{}";
            return;
        }
        out << "{\n";
        bool first = true;
        for (const auto& [key, value] : j.items()) {
            if (!first) out << ",\n";
            first = false;
            out << inner << Json(key).dump() << ": ";
            emit(value, out, indent + 1);
        }
        out << '\n' << pad << '}';
    } else if (j.is_array()) {
        const bool flat = std::all_of(j.begin(), j.end(), [](const Json& e) {
            return is_scalar(e) || (e.is_array() && std::all_of(e.begin(), e.end(), is_scalar));
        });
        out << '[';
        bool first = true;
        for (const auto& e : j) {
            if (!first) out << (flat ? ", " : ",");
            first = false;
            if (!flat) out << '\n' << inner;
            emit(e, out, indent + 1);
        }
        if (!flat && !j.empty()) out << '\n' << pad;
        out << ']';
    } else if (j.is_number_float()) {
        out << format_double(j.get<double>());
    } else {
        out << j.dump();
    }
}

Json complex_array(const std::vector<Complex>& v) {
    Json arr = Json::array();
    for (const auto& z : v) arr.push_back(Json::array({z.real(), z.imag()}));
    return arr;
}

std::vector<Complex> read_complex(const Json& j) {
    std::vector<Complex> out;
    for (const auto& pair : j) {
        if (!pair.is_array() || pair.size() != 2) throw IoError("checkpoint: complex values must be [re, im] pairs");
        out.emplace_back(pair[0].get<double>(), pair[1].get<double>());
    }
    return out;
}

Json matrix_json(const Matrix& m) {
    Json rows = Json::array();
    for (std::size_t r = 0; r < m.rows; ++r) {
        const auto row = m.row(r);
        rows.push_back(Json(std::vector<double>(row.begin(), row.end())));
    }
    return rows;
}

Matrix read_matrix(const Json& j) {
    Matrix m(j.size(), j.empty() ? 0 : j.front().size());
    for (std::size_t r = 0; r < m.rows; ++r) {
        if (j[r].size() != m.cols) throw IoError("checkpoint: ragged matrix");
        for (std::size_t c = 0; c < m.cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

}  // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    const auto& cfg = ckpt.config;
    Json doc;
    doc["format_version"] = kFormatVersion;
    doc["config"] = {{"lookback", cfg.lookback}, {"horizon", cfg.horizon},  {"channels", cfg.channels},
                     {"rank", cfg.rank},         {"use_sfa", cfg.use_sfa}, {"use_sta", cfg.use_sta}};
    doc["loss"] = {{"alpha", ckpt.loss.alpha}};
    const auto& t = ckpt.trainer;
    doc["trainer"] = {{"epochs", t.epochs},
                      {"batch_size", t.batch_size},
                      {"lr", t.lr},
                      {"seed", t.seed},
                      {"tau_start", t.tau.tau_start},
                      {"tau_end", t.tau.tau_end},
                      {"tau_epochs", t.tau.anneal_epochs}};
    doc["channel_names"] = ckpt.channel_names;
    doc["standardizer"] = {{"mean", ckpt.scaler.mean}, {"std", ckpt.scaler.std}};

    Json experts = Json::array();
    for (const auto& e : ckpt.params.experts) {
        experts.push_back({{"sfa_gain", e.sfa_gain},
                           {"sta_gain", e.sta_gain},
                           {"ifm_weight", complex_array(e.ifm_weight)},
                           {"ifm_bias", complex_array(e.ifm_bias)}});
    }
    Json params;
    params["experts"] = std::move(experts);
    if (ckpt.params.router) {
        params["router"] = {{"temperature", ckpt.params.router->temperature},
                            {"logits", matrix_json(ckpt.params.router->logits)}};
    }
    doc["params"] = std::move(params);

    Json history = Json::array();
    for (const auto& r : ckpt.report.history) {
        history.push_back({{"epoch", r.epoch},
                           {"tau", r.tau},
                           {"train_loss", r.train_loss},
                           {"train_freq", r.train_freq},
                           {"train_time", r.train_time},
                           {"val_mse", r.val_mse},
                           {"val_mae", r.val_mae}});
    }
    doc["best_epoch"] = ckpt.report.best_epoch;
    doc["history"] = std::move(history);

    std::ostringstream out;
    emit(doc, out, 0);
    out << '\n';
    return out.str();
}

Checkpoint checkpoint_from_json(const std::string& text) {
    Checkpoint ckpt;
    try {
        const Json doc = Json::parse(text);
        if (doc.at("format_version").get<int>() != kFormatVersion) {
            throw IoError("checkpoint: unsupported format version");
        }
        const auto& c = doc.at("config");
        auto& cfg = ckpt.config;
        cfg.lookback = c.at("lookback").get<std::size_t>();
        cfg.horizon = c.at("horizon").get<std::size_t>();
        cfg.channels = c.at("channels").get<std::size_t>();
        cfg.rank = c.at("rank").get<std::size_t>();
        cfg.use_sfa = c.at("use_sfa").get<bool>();
        cfg.use_sta = c.at("use_sta").get<bool>();
        ckpt.loss.alpha = doc.at("loss").at("alpha").get<double>();

        const auto& t = doc.at("trainer");
        ckpt.trainer.epochs = t.at("epochs").get<std::size_t>();
        ckpt.trainer.batch_size = t.at("batch_size").get<std::size_t>();
        ckpt.trainer.lr = t.at("lr").get<double>();
        ckpt.trainer.seed = t.at("seed").get<std::uint64_t>();
        ckpt.trainer.tau.tau_start = t.at("tau_start").get<double>();
        ckpt.trainer.tau.tau_end = t.at("tau_end").get<double>();
        ckpt.trainer.tau.anneal_epochs = t.at("tau_epochs").get<std::size_t>();

        ckpt.channel_names = doc.at("channel_names").get<std::vector<std::string>>();
        ckpt.scaler.mean = doc.at("standardizer").at("mean").get<std::vector<double>>();
        ckpt.scaler.std = doc.at("standardizer").at("std").get<std::vector<double>>();

        const auto& p = doc.at("params");
        for (const auto& e : p.at("experts")) {
            ckpt.params.experts.push_back({e.at("sfa_gain").get<std::vector<double>>(),
                                           e.at("sta_gain").get<std::vector<double>>(),
                                           read_complex(e.at("ifm_weight")), read_complex(e.at("ifm_bias"))});
        }
        if (p.contains("router")) {
            const auto& r = p.at("router");
            ckpt.params.router = Router{read_matrix(r.at("logits")), r.at("temperature").get<double>()};
        }

        ckpt.report.best_epoch = doc.at("best_epoch").get<std::size_t>();
        for (const auto& r : doc.at("history")) {
            ckpt.report.history.push_back({r.at("epoch").get<std::size_t>(), r.at("tau").get<double>(),
                                           r.at("train_loss").get<double>(), r.at("train_freq").get<double>(),
                                           r.at("train_time").get<double>(), r.at("val_mse").get<double>(),
                                           r.at("val_mae").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint: malformed document: ") + e.what());
    }

    ckpt.config.validate();
    ckpt.params.validate(ckpt.config);
    if (ckpt.scaler.mean.size() != ckpt.config.channels || ckpt.scaler.std.size() != ckpt.config.channels) {
        throw DimensionError("checkpoint: standardizer does not match the channel count");
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out << checkpoint_to_json(ckpt);
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_json(buf.str());
}

}  // namespace dipe
