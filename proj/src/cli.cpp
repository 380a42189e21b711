#include "dipe/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <optional>
#include <ostream>

#include "dipe/data.hpp"
#include "dipe/error.hpp"
#include "dipe/interpret.hpp"
#include "dipe/trainer.hpp"

namespace dipe {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct RunConfig {
    std::string command;
    std::string data_path;
    std::size_t input_len = 720;
    std::size_t horizon = 96;
    std::size_t rank = 1;
    double alpha = 0.5;
    double lr = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    std::optional<double> train_frac;
    std::optional<double> val_frac;
    std::optional<double> test_frac;
    double tau_start = 4.0;
    double tau_end = 1.0;
    std::size_t tau_epochs = 10;
    bool disable_sfa = false;
    bool disable_sta = false;
    bool no_borrow = false;
    std::string checkpoint;
    std::string output;
    std::string split = "test";
};

// Explicit fractions must be given together; otherwise the file name picks the defaults.
SplitSpec split_spec(const RunConfig& rc) {
    const int given = rc.train_frac.has_value() + rc.val_frac.has_value() + rc.test_frac.has_value();
    if (given == 0) return SplitSpec::defaults_for(rc.data_path);
    if (given != 3) throw ParameterError("--train-frac, --val-frac and --test-frac must be given together");
    SplitSpec spec{*rc.train_frac, *rc.val_frac, *rc.test_frac};
    spec.validate();
    return spec;
}

void validate_training_flags(const RunConfig& rc) {
    LossConfig{rc.alpha}.validate();
    TrainerConfig tc;
    tc.epochs = rc.epochs;
    tc.batch_size = rc.batch_size;
    tc.lr = rc.lr;
    tc.tau = {rc.tau_start, rc.tau_end, rc.tau_epochs};
    tc.validate();
    if (rc.input_len < 2) throw ParameterError("--input-len must be at least 2");
    if (rc.horizon < 1) throw ParameterError("--horizon must be at least 1");
    if (rc.rank < 1) throw ParameterError("--rank must be at least 1");
}

void print_metrics(std::ostream& out, const char* split, const Metrics& m) {
    out << split << ',' << num(m.mse) << ',' << num(m.mae) << ',' << m.windows << '\n';
}

int run_train(const RunConfig& rc, std::ostream& out) {
    validate_training_flags(rc);
    const SplitSpec spec = split_spec(rc);
    auto raw = load_csv(rc.data_path);

    ModelConfig cfg;
    cfg.lookback = rc.input_len;
    cfg.horizon = rc.horizon;
    cfg.channels = raw.channels();
    cfg.rank = rc.rank;
    cfg.use_sfa = !rc.disable_sfa;
    cfg.use_sta = !rc.disable_sta;
    cfg.validate();

    TrainerConfig tc;
    tc.epochs = rc.epochs;
    tc.batch_size = rc.batch_size;
    tc.lr = rc.lr;
    tc.seed = rc.seed;
    tc.tau = {rc.tau_start, rc.tau_end, rc.tau_epochs};

    const auto data = prepare_data(std::move(raw), spec, cfg, !rc.no_borrow);
    out << "param_count," << param_count(cfg) << '\n';
    out << "epoch,tau,train_loss,train_freq,train_time,val_mse,val_mae\n";
    const auto result = fit(data, cfg, {rc.alpha}, tc, [&](const EpochRecord& r) {
        out << r.epoch << ',' << num(r.tau) << ',' << num(r.train_loss) << ',' << num(r.train_freq) << ','
            << num(r.train_time) << ',' << num(r.val_mse) << ',' << num(r.val_mae) << '\n';
    });
    save_checkpoint(result.checkpoint, rc.checkpoint);

    out << "best_epoch," << result.report.best_epoch << '\n';
    out << "split,mse,mae,windows\n";
    print_metrics(out, "val", evaluate(result.checkpoint, data, SplitName::val));
    print_metrics(out, "test", evaluate(result.checkpoint, data, SplitName::test));
    return exit_ok;
}

void require_channels(const Checkpoint& ckpt, std::size_t data_channels) {
    if (ckpt.config.channels != data_channels) {
        throw DimensionError("checkpoint expects " + std::to_string(ckpt.config.channels) +
                             " channels but the data has " + std::to_string(data_channels));
    }
}

int run_evaluate(const RunConfig& rc, std::ostream& out) {
    const SplitName split = parse_split_name(rc.split);
    const SplitSpec spec = split_spec(rc);
    const auto ckpt = load_checkpoint(rc.checkpoint);
    auto raw = load_csv(rc.data_path);
    require_channels(ckpt, raw.channels());
    auto data = prepare_data(std::move(raw), spec, ckpt.config, !rc.no_borrow);
    data.scaler = ckpt.scaler;
    out << "split,mse,mae,windows\n";
    print_metrics(out, rc.split.c_str(), evaluate(ckpt, data, split));
    return exit_ok;
}

int run_predict(const RunConfig& rc, std::ostream& out) {
    const auto ckpt = load_checkpoint(rc.checkpoint);
    const auto raw = load_csv(rc.data_path);
    require_channels(ckpt, raw.channels());
    const auto& cfg = ckpt.config;
    if (raw.rows() < cfg.lookback) {
        throw DataError("predict: input has " + std::to_string(raw.rows()) + " rows, the model needs " +
                        std::to_string(cfg.lookback));
    }
    const Matrix x = window_input(raw, ckpt.scaler, raw.rows() - cfg.lookback, cfg.lookback);
    const Matrix y = model_forward(x, ckpt.params, cfg);

    std::ofstream file;
    if (!rc.output.empty()) {
        file.open(rc.output, std::ios::binary);
        if (!file) throw IoError("cannot write " + rc.output);
    }
    std::ostream& dst = rc.output.empty() ? out : file;
    for (std::size_t c = 0; c < cfg.channels; ++c) dst << (c ? "," : "") << ckpt.channel_names.at(c);
    dst << '\n';
    for (std::size_t i = 0; i < cfg.horizon; ++i) {
        for (std::size_t c = 0; c < cfg.channels; ++c) dst << (c ? "," : "") << num(ckpt.scaler.invert(c, y(c, i)));
        dst << '\n';
    }
    if (file.is_open()) {
        file.close();
        if (!file) throw IoError("failed writing " + rc.output);
    }
    return exit_ok;
}

int run_export(const RunConfig& rc, std::ostream& out) {
    const auto ckpt = load_checkpoint(rc.checkpoint);
    for (const auto& p : export_weights(ckpt, rc.output)) out << p.string() << '\n';
    return exit_ok;
}

int run_jsd(const RunConfig& rc, std::ostream& out) {
    const auto ckpt = load_checkpoint(rc.checkpoint);
    if (!ckpt.config.has_router()) {
        throw UnsupportedConfigError("jsd needs a checkpoint with --rank > 1; this one has a single expert and no router");
    }
    const Matrix d = jsd_matrix(ckpt.params, ckpt.config);
    write_jsd_csv(d, ckpt.channel_names, rc.output);
    out << rc.output << '\n';
    return exit_ok;
}

void add_data_flags(CLI::App* cmd, RunConfig& rc) {
    cmd->add_option("--train-frac", rc.train_frac, "Fraction of rows whose targets are used for training");
    cmd->add_option("--val-frac", rc.val_frac, "Fraction of rows for validation");
    cmd->add_option("--test-frac", rc.test_frac, "Fraction of rows for testing");
    cmd->add_flag("--no-borrow", rc.no_borrow, "Keep each window's look-back inside its own split");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    RunConfig rc;
    CLI::App app{"Disentangled linear forecaster: train, evaluate, predict and inspect", "dipe"};
    app.require_subcommand(1);

    auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
    train->add_option("--data", rc.data_path, "CSV file with a header row")->required();
    train->add_option("--input-len", rc.input_len, "Look-back length L")->capture_default_str();
    train->add_option("--horizon", rc.horizon, "Forecast length")->capture_default_str();
    train->add_option("--rank", rc.rank, "Number of expert weight sets")->capture_default_str();
    train->add_option("--alpha", rc.alpha, "Weight of the frequency loss")->capture_default_str();
    train->add_option("--lr", rc.lr, "Adam learning rate")->capture_default_str();
    train->add_option("--epochs", rc.epochs, "Training epochs")->capture_default_str();
    train->add_option("--batch-size", rc.batch_size, "Mini-batch size")->capture_default_str();
    train->add_option("--seed", rc.seed, "Seed for initialization and shuffling")->capture_default_str();
    train->add_option("--tau-start", rc.tau_start, "Router temperature at the first epoch")->capture_default_str();
    train->add_option("--tau-end", rc.tau_end, "Router temperature after annealing")->capture_default_str();
    train->add_option("--tau-epochs", rc.tau_epochs, "Epochs of linear annealing")->capture_default_str();
    train->add_flag("--disable-sfa", rc.disable_sfa, "Replace the frequency gain with identity");
    train->add_flag("--disable-sta", rc.disable_sta, "Replace the temporal gain with identity");
    train->add_option("--checkpoint", rc.checkpoint, "Where to write the checkpoint")->required();
    add_data_flags(train, rc);

    auto* evaluate_cmd = app.add_subcommand("evaluate", "Report MSE and MAE of a checkpoint on one split");
    evaluate_cmd->add_option("--data", rc.data_path, "CSV file with a header row")->required();
    evaluate_cmd->add_option("--checkpoint", rc.checkpoint, "Checkpoint to evaluate")->required();
    evaluate_cmd->add_option("--split", rc.split, "train, val or test")->capture_default_str();
    add_data_flags(evaluate_cmd, rc);

    auto* predict = app.add_subcommand("predict", "Forecast from the last look-back rows of a CSV");
    predict->add_option("--data", rc.data_path, "CSV file with at least L rows")->required();
    predict->add_option("--checkpoint", rc.checkpoint, "Checkpoint to use")->required();
    predict->add_option("--output", rc.output, "Forecast CSV (standard output if omitted)");

    auto* export_cmd = app.add_subcommand("export-weights", "Write learned weights as CSV files");
    export_cmd->add_option("--checkpoint", rc.checkpoint, "Checkpoint to export")->required();
    export_cmd->add_option("--output", rc.output, "Output directory")->required();

    auto* jsd_cmd = app.add_subcommand("jsd", "Write the Jensen-Shannon distance matrix of the router");
    jsd_cmd->add_option("--checkpoint", rc.checkpoint, "Checkpoint with more than one expert")->required();
    jsd_cmd->add_option("--output", rc.output, "Output CSV")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        err << "dipe: " << e.what() << '\n';
        return exit_config;
    }

    for (auto* sub : app.get_subcommands()) rc.command = sub->get_name();
    const std::string who = "dipe " + rc.command;
    try {
        if (rc.command == "train") return run_train(rc, out);
        if (rc.command == "evaluate") return run_evaluate(rc, out);
        if (rc.command == "predict") return run_predict(rc, out);
        if (rc.command == "export-weights") return run_export(rc, out);
        return run_jsd(rc, out);
    } catch (const ParameterError& e) {
        err << who << ": configuration error: " << e.what() << '\n';
        return exit_config;
    } catch (const DimensionError& e) {
        err << who << ": configuration error: " << e.what() << '\n';
        return exit_config;
    } catch (const UnsupportedConfigError& e) {
        err << who << ": configuration error: " << e.what() << '\n';
        return exit_config;
    } catch (const DataError& e) {
        err << who << ": data error: " << e.what() << '\n';
        return exit_data;
    } catch (const IoError& e) {
        err << who << ": data error: " << e.what() << '\n';
        return exit_data;
    } catch (const NumericError& e) {
        err << who << ": numeric error: " << e.what() << '\n';
        return exit_numeric;
    } catch (const SymmetryError& e) {
        err << who << ": numeric error: " << e.what() << '\n';
        return exit_numeric;
    }
}

}  // namespace dipe
