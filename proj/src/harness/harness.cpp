#include "beamcast/harness/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "beamcast/errors.hpp"

namespace beamcast::harness {

namespace {

enum StreamKey : std::uint64_t { kShuffle = 11, kAugment = 12, kDropout = 13 };

constexpr int kDefaultKs[] = {1, 3, 5};

std::string format_lr(double lr)
{
    std::ostringstream out;
    out << lr;
    return out.str();
}

} // namespace

void TrainConfig::validate() const
{
    if (epochs < 1) {
        throw ConfigError("train.epochs must be >= 1");
    }
    if (batch_size < 1) {
        throw ConfigError("train.batch_size must be >= 1");
    }
    if (!(lr >= 0.0) || !std::isfinite(lr)) {
        throw ConfigError("train.lr must be a finite non-negative number");
    }
    if (eval_every < 1) {
        throw ConfigError("train.eval_every must be >= 1");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ConfigError("train.train_fraction must lie in (0, 1)");
    }
    if (!(grad_clip >= 0.0)) {
        throw ConfigError("train.grad_clip must be non-negative");
    }
    for (int m : milestones) {
        if (m < 1 || m >= epochs) {
            throw ConfigError("train.milestones must lie in [1, epochs)");
        }
    }
    try {
        schedule().validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("train.") + e.what());
    }
    try {
        augment.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("train.") + e.what());
    }
}

double EvalResult::top(int k) const
{
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (ks[i] == k) {
            return accuracy[i];
        }
    }
    throw IndexError("top-" + std::to_string(k) + " accuracy was not evaluated");
}

std::span<const int> default_ks() { return kDefaultKs; }

EvalResult evaluate_logits(std::span<const float> logits, std::span<const int> labels, int num_classes,
                           std::span<const int> ks)
{
    if (labels.empty()) {
        throw EvaluationError("cannot evaluate an empty split");
    }
    if (num_classes < 1 || logits.size() != labels.size() * static_cast<std::size_t>(num_classes)) {
        throw DimensionError("evaluate: " + std::to_string(logits.size()) + " logits for " +
                             std::to_string(labels.size()) + " labels and " + std::to_string(num_classes) +
                             " classes");
    }
    if (ks.empty()) {
        throw ConfigError("evaluate: no K values requested");
    }
    EvalResult result;
    result.ks.assign(ks.begin(), ks.end());
    result.count = labels.size();
    result.confusion.assign(static_cast<std::size_t>(num_classes),
                            std::vector<std::uint64_t>(static_cast<std::size_t>(num_classes), 0));
    int kmax = 0;
    for (int k : ks) {
        if (k < 1) {
            throw ConfigError("evaluate: K must be >= 1");
        }
        kmax = std::max(kmax, std::min(k, num_classes));
    }
    std::vector<std::uint64_t> hits(ks.size(), 0);
    const auto q = static_cast<std::size_t>(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int label = labels[i];
        if (label < 0 || label >= num_classes) {
            throw IndexError("evaluate: label " + std::to_string(label) + " outside [0, " +
                             std::to_string(num_classes) + ")");
        }
        const auto ranked = beamnet::predict_topk(logits.subspan(i * q, q), kmax);
        ++result.confusion[static_cast<std::size_t>(label)][static_cast<std::size_t>(ranked.front())];
        const auto pos = std::find(ranked.begin(), ranked.end(), label) - ranked.begin();
        for (std::size_t j = 0; j < ks.size(); ++j) {
            if (pos < std::min(ks[j], num_classes)) {
                ++hits[j];
            }
        }
    }
    for (auto h : hits) {
        result.accuracy.push_back(static_cast<double>(h) / static_cast<double>(labels.size()));
    }
    return result;
}

Batch make_batch(const airsim::Dataset& data, std::span<const std::size_t> indices,
                 const pipeline::StructScaler& scaler, bool train, const pipeline::AugmentConfig& augment,
                 std::uint64_t seed, int epoch)
{
    if (indices.empty()) {
        throw ConfigError("make_batch: empty batch");
    }
    const int h = data.manifest.image_height, w = data.manifest.image_width;
    const Index plane = 3L * h * w;
    const auto b = static_cast<Index>(indices.size());
    Array<float> images(b * plane);
    Array<float> features(b * 8);
    Batch batch;
    for (Index i = 0; i < b; ++i) {
        const std::size_t idx = indices[static_cast<std::size_t>(i)];
        const airsim::Sample& s = data.samples.at(idx);
        pipeline::Image img = s.image;
        if (train) {
            Rng rng = Rng::derived(seed, {kAugment, static_cast<std::uint64_t>(epoch), idx});
            img = pipeline::augment_image(img, rng, true, augment);
        }
        images.segment(i * plane, plane) = pipeline::normalize_image(img).pixels;
        const auto f = scaler.apply(s.features);
        for (Index j = 0; j < 8; ++j) {
            features[i * 8 + j] = f[static_cast<std::size_t>(j)];
        }
        batch.labels.push_back(s.label);
    }
    batch.images = Tensor<float>({b, 3, h, w}, std::move(images));
    batch.features = Tensor<float>({b, 8}, std::move(features));
    return batch;
}

EvalResult evaluate(beamnet::BeamNet<float>& model, const airsim::Dataset& data, std::span<const std::size_t> indices,
                    const pipeline::StructScaler& scaler, std::span<const int> ks, int batch_size)
{
    if (indices.empty()) {
        throw EvaluationError("cannot evaluate an empty split");
    }
    NoGradGuard no_grad;
    beamnet::ForwardContext ctx{Mode::Eval, nullptr};
    const int q = model.config().num_beams;
    std::vector<float> logits;
    std::vector<int> labels;
    logits.reserve(indices.size() * static_cast<std::size_t>(q));
    for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto chunk = indices.subspan(start, std::min<std::size_t>(batch_size, indices.size() - start));
        const Batch batch = make_batch(data, chunk, scaler, false, {}, 0, 0);
        const Tensor<float> out = model.forward(batch.images, batch.features, ctx);
        logits.insert(logits.end(), out.data().begin(), out.data().end());
        labels.insert(labels.end(), batch.labels.begin(), batch.labels.end());
    }
    return evaluate_logits(logits, labels, q, ks);
}

PreparedData prepare(const airsim::Dataset& data, const TrainConfig& cfg)
{
    PreparedData p;
    p.split = pipeline::split_dataset(data.samples.size(), {cfg.train_fraction, cfg.seed});
    if (p.split.train.empty() || p.split.test.empty()) {
        throw ConfigError("train_fraction leaves an empty train or test split for " +
                          std::to_string(data.samples.size()) + " samples");
    }
    std::vector<pipeline::FeatureVec> train_features;
    train_features.reserve(p.split.train.size());
    for (auto i : p.split.train) {
        train_features.push_back(data.samples[i].features);
    }
    p.scaler = pipeline::StructScaler::fit(train_features);
    return p;
}

namespace {

} // namespace

void check_compatible(const beamnet::ModelConfig& model, const airsim::Dataset& data)
{
    const auto& m = data.manifest;
    if (m.num_beams != model.num_beams) {
        throw ConfigError("num_beams: data has " + std::to_string(m.num_beams) + " beams, model expects " +
                          std::to_string(model.num_beams));
    }
    if (m.image_height != model.image_size || m.image_width != model.image_size) {
        throw ConfigError("image_size: data images are " + std::to_string(m.image_height) + "x" +
                          std::to_string(m.image_width) + ", model expects " + std::to_string(model.image_size));
    }
    if (data.samples.size() != m.n) {
        throw FormatError("dataset holds " + std::to_string(data.samples.size()) + " samples, manifest says " +
                          std::to_string(m.n));
    }
}

Trainer::Trainer(const beamnet::ModelConfig& model_config, const TrainConfig& train_config,
                 const airsim::Dataset& data)
    : config_(train_config), data_(data), prepared_((train_config.validate(), check_compatible(model_config, data),
                                                     prepare(data, train_config))),
      model_(model_config, train_config.seed), adam_(model_.parameters(), train_config.lr)
{
}

bool Trainer::eval_due(int epoch) const
{
    return (epoch + 1) % config_.eval_every == 0 || epoch + 1 == config_.epochs;
}

EpochRecord Trainer::run_epoch()
{
    const auto start = std::chrono::steady_clock::now();
    const int epoch = epochs_done_;
    const auto epoch_key = static_cast<std::uint64_t>(epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = config_.schedule().lr_at(epoch);
    adam_.lr = rec.lr;

    Rng shuffle_rng = Rng::derived(config_.seed, {kShuffle, epoch_key});
    const auto batches = pipeline::make_batches(prepared_.split.train, static_cast<std::size_t>(config_.batch_size),
                                                shuffle_rng, true);
    auto& params = model_.parameters();
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
        const Batch batch =
            make_batch(data_, batches[b], prepared_.scaler, true, config_.augment, config_.seed, epoch);
        Rng dropout_rng = Rng::derived(config_.seed, {kDropout, epoch_key, b});
        beamnet::ForwardContext ctx{Mode::Train, &dropout_rng};
        zero_grad(params);
        Tensor<float> loss = cross_entropy(model_.forward(batch.images, batch.features, ctx), batch.labels);
        const float value = loss.item();
        if (!std::isfinite(value)) {
            throw NumericalError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                 std::to_string(b + 1) + " (lr " + format_lr(rec.lr) + ")");
        }
        loss.backward();
        if (config_.grad_clip > 0.0) {
            clip_grad_norm(params, config_.grad_clip);
        }
        try {
            adam_step(params, adam_);
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " at epoch " + std::to_string(epoch + 1) + ", batch " +
                                 std::to_string(b + 1));
        }
        loss_sum += value;
    }
    zero_grad(params);
    rec.train_loss = loss_sum / static_cast<double>(batches.size());
    if (eval_due(epoch)) {
        rec.eval = evaluate_test();
    }
    ++epochs_done_;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

MetricsReport Trainer::run(const std::function<void(const Trainer&, const EpochRecord&)>& on_epoch)
{
    MetricsReport report;
    while (epochs_done_ < config_.epochs) {
        report.epochs.push_back(run_epoch());
        if (on_epoch) {
            on_epoch(*this, report.epochs.back());
        }
    }
    if (!report.epochs.empty() && report.epochs.back().eval) {
        report.final_eval = *report.epochs.back().eval;
    } else {
        report.final_eval = evaluate_test();
    }
    return report;
}

MetricsReport train(const beamnet::ModelConfig& model_config, const TrainConfig& train_config,
                    const airsim::Dataset& data)
{
    Trainer trainer(model_config, train_config, data);
    return trainer.run();
}

SweepResult lr_sweep(const beamnet::ModelConfig& model_config, const TrainConfig& base, const airsim::Dataset& data,
                     std::span<const double> lrs, unsigned threads, const std::function<void(const SweepArm&)>& on_arm,
                     const std::function<void(const Trainer&, const EpochRecord&)>& on_epoch)
{
    if (lrs.empty()) {
        throw ConfigError("sweep needs at least one learning rate");
    }
    SweepResult result;
    std::vector<double> distinct;
    for (double lr : lrs) {
        if (std::find(distinct.begin(), distinct.end(), lr) != distinct.end()) {
            result.warnings.push_back("duplicate learning rate " + format_lr(lr) + " ignored");
            continue;
        }
        distinct.push_back(lr);
    }
    result.arms.resize(distinct.size());
    std::mutex report_mutex;
    auto run_arm = [&](std::size_t i) {
        SweepArm& arm = result.arms[i];
        arm.lr = distinct[i];
        TrainConfig cfg = base;
        cfg.lr = distinct[i];
        try {
            Trainer trainer(model_config, cfg, data);
            arm.report = trainer.run(on_epoch);
        } catch (const NumericalError& e) {
            arm.diverged = true;
            arm.error = e.what();
        } catch (const std::exception& e) {
            arm.error = e.what();
        }
        if (on_arm) {
            std::lock_guard lock(report_mutex);
            on_arm(arm);
        }
    };
    threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(distinct.size())));
    if (threads == 1) {
        for (std::size_t i = 0; i < distinct.size(); ++i) {
            run_arm(i);
        }
        return result;
    }
    {
        std::vector<std::jthread> workers;
        for (unsigned w = 0; w < threads; ++w) {
            workers.emplace_back([&, w] {
                for (std::size_t i = w; i < distinct.size(); i += threads) {
                    run_arm(i);
                }
            });
        }
    }
    return result;
}

ConfusionSummary confusion_topn(const std::vector<std::vector<std::uint64_t>>& matrix, int n)
{
    const std::size_t q = matrix.size();
    std::vector<std::uint64_t> counts(q, 0);
    std::size_t nonempty = 0;
    for (std::size_t i = 0; i < q; ++i) {
        if (matrix[i].size() != q) {
            throw DimensionError("confusion matrix must be square");
        }
        counts[i] = std::accumulate(matrix[i].begin(), matrix[i].end(), std::uint64_t{0});
        nonempty += counts[i] > 0 ? 1 : 0;
    }
    if (n < 1 || static_cast<std::size_t>(n) > nonempty) {
        throw IndexError("confusion_topn: n = " + std::to_string(n) + " but only " + std::to_string(nonempty) +
                         " classes have samples");
    }
    std::vector<int> order(q);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(n));

    ConfusionSummary out;
    out.classes = order;
    for (int r : order) {
        const auto& row = matrix[static_cast<std::size_t>(r)];
        const double total = static_cast<double>(counts[static_cast<std::size_t>(r)]);
        std::vector<double> pct;
        std::uint64_t inside = 0;
        for (int c : order) {
            const auto v = row[static_cast<std::size_t>(c)];
            inside += v;
            pct.push_back(100.0 * static_cast<double>(v) / total);
        }
        out.counts.push_back(counts[static_cast<std::size_t>(r)]);
        out.percent.push_back(std::move(pct));
        out.excluded.push_back(100.0 * static_cast<double>(counts[static_cast<std::size_t>(r)] - inside) / total);
    }
    return out;
}

} // namespace beamcast::harness
