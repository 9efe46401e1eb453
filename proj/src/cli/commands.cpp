#include "beamcast/cli/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>

#include "beamcast/binary_io.hpp"
#include "beamcast/cli/checkpoint.hpp"
#include "beamcast/cli/config.hpp"
#include "beamcast/errors.hpp"
#include "beamcast/harness/report.hpp"
#include "beamcast/runtime.hpp"

namespace beamcast::cli {

namespace fs = std::filesystem;

namespace {

struct GenDataArgs {
    std::string config, out;
    std::optional<std::uint64_t> samples, seed;
    std::optional<int> image_size, num_beams, num_antennas;
    bool force = false;
    unsigned threads = 0;
};

struct TrainArgs {
    std::string config, data, out, resume;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
};

struct EvalArgs {
    std::string checkpoint, data, confusion_out, split = "test";
    std::vector<int> topk{1, 3, 5};
    int confusion_top = 0;
};

struct SweepArgs {
    std::string config, data, out;
    std::vector<double> lrs{1e-3, 1e-4, 1e-5};
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    unsigned threads = 1;
};

RunConfig base_config(const std::string& path) { return path.empty() ? RunConfig{} : load_run_config(path); }

std::string pick(const std::string& flag, const std::string& from_config, const char* name)
{
    const std::string& v = flag.empty() ? from_config : flag;
    if (v.empty()) {
        throw ConfigError(std::string("--") + name + ": required (flag or paths." + name + " in the config)");
    }
    return v;
}

std::string epoch_line(const harness::EpochRecord& r, int total)
{
    std::ostringstream s;
    s << "epoch " << r.epoch + 1 << "/" << total << " lr " << harness::format_number(r.lr) << " loss "
      << harness::format_number(r.train_loss);
    if (r.eval) {
        for (std::size_t i = 0; i < r.eval->ks.size(); ++i) {
            s << " top" << r.eval->ks[i] << " " << harness::format_number(r.eval->accuracy[i]);
        }
    }
    return s.str();
}

// Rows of an earlier metrics/timing file up to and including `last_epoch`
// (1-based numbering), header excluded.
std::string kept_rows(const fs::path& file, int last_epoch)
{
    if (!fs::exists(file)) {
        return {};
    }
    const auto bytes = io::read_file(file);
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    std::string line, kept;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (std::stoi(line.substr(0, line.find(','))) <= last_epoch) {
            kept += line + "\n";
        }
    }
    return kept;
}

// Per-run artifacts shared by train and every sweep arm.
class RunWriter {
public:
    RunWriter(fs::path dir, int resumed_from) : dir_(std::move(dir))
    {
        fs::create_directories(dir_);
        if (resumed_from > 0) {
            metrics_prefix_ = kept_rows(dir_ / "metrics.csv", resumed_from);
            timing_prefix_ = kept_rows(dir_ / "timing.csv", resumed_from);
        }
    }

    void on_epoch(const harness::Trainer& trainer, const harness::EpochRecord& record)
    {
        epochs_.push_back(record);
        if (record.eval) {
            save_checkpoint(dir_ / "checkpoint.bin", capture(trainer));
            write_metrics();
        }
    }

    void finish(const harness::MetricsReport& report)
    {
        write_metrics();
        io::write_file_atomic(dir_ / "summary.json", harness::summary_json(report.final_eval));
        io::write_file_atomic(dir_ / "confusion.csv", harness::confusion_csv(report.final_eval.confusion));
    }

private:
    void write_metrics()
    {
        io::write_file_atomic(dir_ / "metrics.csv", "epoch,lr,train_loss,top1,top3,top5\n" + metrics_prefix_ +
                                                        harness::metrics_csv(epochs_, false));
        io::write_file_atomic(dir_ / "timing.csv",
                              "epoch,seconds\n" + timing_prefix_ + harness::timing_csv(epochs_, false));
    }

    fs::path dir_;
    std::string metrics_prefix_, timing_prefix_;
    std::vector<harness::EpochRecord> epochs_;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out)
{
    RunConfig c = base_config(a.config);
    if (a.samples) {
        c.samples = *a.samples;
    }
    if (a.seed) {
        c.seed = *a.seed;
    }
    if (a.image_size) {
        c.scene.image_size = *a.image_size;
    }
    if (a.num_beams) {
        c.radio.num_beams = *a.num_beams;
    }
    if (a.num_antennas) {
        c.radio.num_antennas = *a.num_antennas;
    }
    if (c.samples < 1) {
        throw ConfigError("samples: must be >= 1");
    }
    c.scene.validate();
    c.radio.validate();
    const fs::path dir = pick(a.out, c.out_dir, "out");
    if (fs::exists(dir) && !fs::is_empty(dir) && !a.force) {
        throw ConfigError("--out: '" + dir.string() + "' is not empty (use --force to overwrite)");
    }
    const auto data = airsim::generate_dataset(c.samples, c.scene, c.radio, c.seed, worker_threads(a.threads));
    airsim::write_dataset(dir, data);

    const auto hist = airsim::label_histogram(data);
    int used = 0;
    for (auto h : hist) {
        used += h > 0 ? 1 : 0;
    }
    out << "wrote " << data.samples.size() << " samples (" << c.scene.image_size << "x" << c.scene.image_size
        << ", Q=" << c.radio.num_beams << ", M=" << c.radio.num_antennas << ", seed " << c.seed << ") to "
        << dir.string() << "\n";
    out << "label histogram: " << used << " of " << hist.size() << " beams populated\n";
    for (std::size_t q = 0; q < hist.size(); ++q) {
        if (hist[q] > 0) {
            out << "  beam " << q << ": " << hist[q] << "\n";
        }
    }
    return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out)
{
    RunConfig c = base_config(a.config);
    if (a.seed) {
        c.seed = *a.seed;
        c.train.seed = *a.seed;
    }
    if (a.epochs) {
        c.train.epochs = *a.epochs;
    }
    std::optional<Checkpoint> ckpt;
    if (!a.resume.empty()) {
        ckpt = load_checkpoint(a.resume);
        c.model = ckpt->model;
        const auto epochs = c.train.epochs;
        c.train = ckpt->train;
        if (a.epochs) {
            c.train.epochs = epochs;
        }
    }
    c.model.validate();
    c.train.validate();
    const fs::path dir = pick(a.out, c.out_dir, "out");
    const auto data = airsim::read_dataset(pick(a.data, c.data_dir, "data"));

    harness::Trainer trainer(c.model, c.train, data);
    if (ckpt) {
        restore_trainer(*ckpt, trainer);
        out << "resuming at epoch " << trainer.epochs_done() + 1 << "\n";
    }
    RunWriter writer(dir, trainer.epochs_done());
    io::write_file_atomic(dir / "model_config.json", to_json(c.model).dump(2) + "\n");
    io::write_file_atomic(dir / "train_config.json", to_json(c.train).dump(2) + "\n");
    const auto report = trainer.run([&](const harness::Trainer& t, const harness::EpochRecord& r) {
        writer.on_epoch(t, r);
        out << epoch_line(r, c.train.epochs) << std::endl;
    });
    writer.finish(report);
    out << harness::topk_table(report.final_eval);
    return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out)
{
    // Load everything before writing anything.
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const auto data = airsim::read_dataset(a.data);
    harness::check_compatible(ckpt.model, data);
    for (int k : a.topk) {
        if (k < 1) {
            throw ConfigError("--topk: K must be >= 1 (got " + std::to_string(k) + ")");
        }
    }
    std::vector<std::size_t> indices;
    if (a.split == "test") {
        indices = harness::prepare(data, ckpt.train).split.test;
    } else {
        indices.resize(data.samples.size());
        for (std::size_t i = 0; i < indices.size(); ++i) {
            indices[i] = i;
        }
    }
    beamnet::BeamNet<float> model(ckpt.model, 0);
    restore_model(ckpt, model);
    const auto result = harness::evaluate(model, data, indices, ckpt.scaler, a.topk);
    std::string summary_text;
    if (a.confusion_top > 0) {
        summary_text = harness::confusion_topn_text(harness::confusion_topn(result.confusion, a.confusion_top));
    }
    out << harness::topk_table(result) << summary_text;
    if (!a.confusion_out.empty()) {
        io::write_file_atomic(a.confusion_out, harness::confusion_csv(result.confusion));
    }
    return kExitOk;
}

int cmd_sweep(const SweepArgs& a, std::ostream& out, std::ostream& err)
{
    RunConfig c = base_config(a.config);
    if (a.seed) {
        c.seed = *a.seed;
        c.train.seed = *a.seed;
    }
    if (a.epochs) {
        c.train.epochs = *a.epochs;
    }
    c.model.validate();
    c.train.validate();
    const fs::path dir = pick(a.out, c.out_dir, "out");
    const auto data = airsim::read_dataset(pick(a.data, c.data_dir, "data"));
    harness::check_compatible(c.model, data);
    fs::create_directories(dir);

    auto arm_dir = [&](double lr) { return dir / ("lr_" + harness::format_number(lr)); };
    std::mutex writers_mutex;
    std::map<double, std::unique_ptr<RunWriter>> writers;
    auto writer_for = [&](double lr) -> RunWriter& {
        std::lock_guard lock(writers_mutex);
        auto& w = writers[lr];
        if (!w) {
            w = std::make_unique<RunWriter>(arm_dir(lr), 0);
        }
        return *w;
    };
    const auto sweep = harness::lr_sweep(
        c.model, c.train, data, a.lrs, worker_threads(a.threads),
        [&](const harness::SweepArm& arm) {
            if (arm.report) {
                writer_for(arm.lr).finish(*arm.report);
                out << "lr " << harness::format_number(arm.lr) << ": top1 "
                    << harness::format_number(arm.report->final_eval.top(1)) << std::endl;
            } else {
                err << "lr " << harness::format_number(arm.lr) << ": " << (arm.diverged ? "diverged: " : "failed: ")
                    << arm.error << std::endl;
            }
        },
        [&](const harness::Trainer& t, const harness::EpochRecord& r) { writer_for(t.config().lr).on_epoch(t, r); });
    for (const auto& w : sweep.warnings) {
        err << "warning: " << w << "\n";
    }
    const std::string table = harness::sweep_csv(sweep);
    io::write_file_atomic(dir / "sweep.csv", table);
    out << table;

    bool any_ok = false, all_diverged = true;
    for (const auto& arm : sweep.arms) {
        any_ok = any_ok || arm.report.has_value();
        all_diverged = all_diverged && arm.diverged;
    }
    if (any_ok) {
        return kExitOk;
    }
    return all_diverged ? kExitNumerical : kExitUsage;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"beamcast: synthetic beam-prediction data, training and evaluation"};
    app.require_subcommand(1);

    GenDataArgs g;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
    gen->add_option("--out", g.out, "Output directory");
    gen->add_option("--samples", g.samples, "Number of samples");
    gen->add_option("--seed", g.seed, "Dataset seed");
    gen->add_option("--image-size", g.image_size, "Image side in pixels");
    gen->add_option("--num-beams", g.num_beams, "Codebook size Q");
    gen->add_option("--num-antennas", g.num_antennas, "Array size M");
    gen->add_option("--config", g.config, "JSON run config");
    gen->add_flag("--force", g.force, "Overwrite a non-empty output directory");
    gen->add_option("--threads", g.threads, "Worker threads (0 = all cores)");

    TrainArgs t;
    auto* train = app.add_subcommand("train", "Train a model");
    train->add_option("--data", t.data, "Dataset directory");
    auto* train_config = train->add_option("--config", t.config, "JSON run config");
    train->add_option("--out", t.out, "Output directory");
    train->add_option("--seed", t.seed, "Training seed");
    train->add_option("--epochs", t.epochs, "Total epochs (overrides the config)");
    train->add_option("--resume", t.resume, "Continue from a checkpoint")->excludes(train_config);

    EvalArgs e;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval->add_option("--checkpoint", e.checkpoint, "Checkpoint file")->required();
    eval->add_option("--data", e.data, "Dataset directory")->required();
    eval->add_option("--topk", e.topk, "Comma-separated K values")->delimiter(',');
    eval->add_option("--confusion-out", e.confusion_out, "Write the confusion matrix CSV here");
    eval->add_option("--confusion-top", e.confusion_top, "Print the N most populous classes");
    eval->add_option("--split", e.split, "test (held-out part) or all")->check(CLI::IsMember({"test", "all"}));

    SweepArgs s;
    auto* sweep = app.add_subcommand("sweep", "Learning-rate sweep");
    sweep->add_option("--data", s.data, "Dataset directory");
    sweep->add_option("--config", s.config, "JSON run config");
    sweep->add_option("--out", s.out, "Output directory");
    sweep->add_option("--lrs", s.lrs, "Comma-separated learning rates")->delimiter(',');
    sweep->add_option("--seed", s.seed, "Training seed");
    sweep->add_option("--epochs", s.epochs, "Epochs per arm (overrides the config)");
    sweep->add_option("--threads", s.threads, "Arms run concurrently (0 = all cores)");

    std::vector<std::string> argv_storage{"beamcast"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& arg : argv_storage) {
        argv.push_back(arg.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_data(g, out);
        }
        if (train->parsed()) {
            return cmd_train(t, out);
        }
        if (eval->parsed()) {
            return cmd_eval(e, out);
        }
        return cmd_sweep(s, out, err);
    } catch (const NumericalError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitNumerical;
    } catch (const Error& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const fs::filesystem_error& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    }
}

} // namespace beamcast::cli
