#include <gtest/gtest.h>

#include <cmath>

#include "beamcast/errors.hpp"
#include "beamcast/harness/harness.hpp"
#include "beamcast/harness/report.hpp"

using namespace beamcast;
using namespace beamcast::harness;

namespace {

beamnet::ModelConfig tiny_model()
{
    beamnet::ModelConfig c;
    c.image_size = 16;
    c.conv_channels = {2, 3, 4, 6};
    c.embed_dim = 8;
    c.num_heads = 2;
    c.cross_heads = 2;
    c.num_beams = 4;
    return c;
}

const airsim::Dataset& tiny_data()
{
    static const airsim::Dataset data = [] {
        airsim::SceneConfig scene;
        scene.image_size = 16;
        airsim::RadioConfig radio;
        radio.num_antennas = 4;
        radio.num_beams = 4;
        radio.num_subcarriers = 4;
        return airsim::generate_dataset(120, scene, radio, 3);
    }();
    return data;
}

TrainConfig short_run(int epochs)
{
    TrainConfig t;
    t.epochs = epochs;
    t.milestones = {};
    t.eval_every = 1;
    t.seed = 9;
    return t;
}

bool same_parameters(const beamnet::BeamNet<float>& a, const beamnet::BeamNet<float>& b)
{
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
        if (!(a.parameters()[i].tensor.data() == b.parameters()[i].tensor.data()).all()) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST(TrainConfig, Validation)
{
    TrainConfig t;
    EXPECT_NO_THROW(t.validate());
    t.milestones = {30, 100};
    EXPECT_THROW(t.validate(), ConfigError);
    t = TrainConfig{};
    t.epochs = 0;
    EXPECT_THROW(t.validate(), ConfigError);
    t = TrainConfig{};
    t.lr = std::nan("");
    EXPECT_THROW(t.validate(), ConfigError);
    t = TrainConfig{};
    t.milestones = {60, 30};
    EXPECT_THROW(t.validate(), ConfigError);
}

TEST(Schedule, DefaultMilestoneBoundary)
{
    const TrainConfig t;
    EXPECT_DOUBLE_EQ(t.schedule().lr_at(29), 1e-4);
    EXPECT_NEAR(t.schedule().lr_at(30), 1e-5, 1e-20);
}

TEST(Schedule, EpochRecordsFollowMilestones)
{
    TrainConfig t = short_run(4);
    t.lr = 1e-3;
    t.milestones = {1, 3};
    Trainer trainer(tiny_model(), t, tiny_data());
    const auto report = trainer.run();
    ASSERT_EQ(report.epochs.size(), 4U);
    EXPECT_DOUBLE_EQ(report.epochs[0].lr, 1e-3);
    EXPECT_NEAR(report.epochs[1].lr, 1e-4, 1e-18);
    EXPECT_NEAR(report.epochs[2].lr, 1e-4, 1e-18);
    EXPECT_NEAR(report.epochs[3].lr, 1e-5, 1e-19);
}

TEST(Train, ZeroLearningRateFreezesParameters)
{
    TrainConfig t = short_run(2);
    t.lr = 0.0;
    t.augment.enabled = false;
    Trainer trainer(tiny_model(), t, tiny_data());
    const beamnet::BeamNet<float> initial(tiny_model(), t.seed);
    const auto report = trainer.run();
    EXPECT_TRUE(same_parameters(trainer.model(), initial));
    // dropout masks and batch composition still vary between epochs
    EXPECT_NEAR(report.epochs[1].train_loss, report.epochs[0].train_loss, 0.1 * report.epochs[0].train_loss);
}

TEST(Train, ReferenceRunsAreBitReproducible)
{
    Trainer a(tiny_model(), short_run(3), tiny_data());
    Trainer b(tiny_model(), short_run(3), tiny_data());
    const auto ra = a.run();
    const auto rb = b.run();
    EXPECT_TRUE(same_parameters(a.model(), b.model()));
    EXPECT_EQ(metrics_csv(ra.epochs), metrics_csv(rb.epochs));
    for (std::size_t i = 0; i < a.model().batchnorm_states().size(); ++i) {
        EXPECT_TRUE((a.model().batchnorm_states()[i].running_var == b.model().batchnorm_states()[i].running_var).all());
    }
}

TEST(Train, ResumeContinuesBitIdentically)
{
    Trainer straight(tiny_model(), short_run(4), tiny_data());
    const auto full = straight.run();

    Trainer first(tiny_model(), short_run(4), tiny_data());
    first.run_epoch();
    first.run_epoch();
    Trainer resumed(tiny_model(), short_run(4), tiny_data());
    for (std::size_t i = 0; i < first.model().parameters().size(); ++i) {
        resumed.model().parameters()[i].tensor.data() = first.model().parameters()[i].tensor.data();
    }
    resumed.model().batchnorm_states() = first.model().batchnorm_states();
    resumed.optimizer() = first.optimizer();
    resumed.set_epochs_done(first.epochs_done());
    const auto rest = resumed.run();

    ASSERT_EQ(rest.epochs.size(), 2U);
    EXPECT_EQ(rest.epochs.front().epoch, 2);
    EXPECT_TRUE(same_parameters(straight.model(), resumed.model()));
    EXPECT_EQ(metrics_csv(rest.epochs, false), metrics_csv({full.epochs[2], full.epochs[3]}, false));
}

TEST(Train, MismatchedBeamCountNamesField)
{
    beamnet::ModelConfig m = tiny_model();
    m.num_beams = 8;
    try {
        Trainer trainer(m, short_run(1), tiny_data());
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("num_beams"), std::string::npos);
    }
}

TEST(Train, NonFiniteLossReportsEpochAndBatch)
{
    Trainer trainer(tiny_model(), short_run(1), tiny_data());
    trainer.model().parameter("classifier.out.bias").data()[0] = std::nanf("");
    try {
        trainer.run_epoch();
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 1, batch 1"), std::string::npos) << e.what();
    }
}

TEST(Train, SmallStepLowersSingleBatchLoss)
{
    const auto& data = tiny_data();
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TrainConfig t = short_run(1);
        t.seed = seed;
        Trainer trainer(tiny_model(), t, data);
        auto& model = trainer.model();
        const std::vector<std::size_t> idx(trainer.prepared().split.train.begin(),
                                           trainer.prepared().split.train.begin() + 32);
        const Batch batch = make_batch(data, idx, trainer.prepared().scaler, false, {}, 0, 0);
        const auto bn = model.batchnorm_states();
        auto loss_at = [&] {
            model.batchnorm_states() = bn;
            Rng drop(seed);
            beamnet::ForwardContext ctx{Mode::Train, &drop};
            return cross_entropy(model.forward(batch.images, batch.features, ctx), batch.labels);
        };
        auto before = loss_at();
        zero_grad(model.parameters());
        before.backward();
        AdamState<float> adam(model.parameters(), 1e-5);
        adam_step(model.parameters(), adam);
        NoGradGuard no_grad;
        EXPECT_LT(loss_at().item(), before.item()) << "seed " << seed;
    }
}

TEST(Train, ToyTaskLossDecreasesOverFirstEpochs)
{
    airsim::SceneConfig scene;
    scene.image_size = 32;
    airsim::RadioConfig radio;
    radio.num_antennas = 8;
    radio.num_beams = 8;
    const auto data = airsim::generate_dataset(2000, scene, radio, 1);
    TrainConfig t; // defaults: lr 1e-4, batch 32, augmentation on
    t.epochs = 5;
    t.milestones = {};
    Trainer trainer(beamnet::ModelConfig::toy(), t, data);
    const auto report = trainer.run();
    for (std::size_t e = 1; e < report.epochs.size(); ++e) {
        EXPECT_LT(report.epochs[e].train_loss, report.epochs[e - 1].train_loss) << "epoch " << e + 1;
    }
}

TEST(Evaluate, OracleLogitsArePerfect)
{
    Rng rng(1);
    const int q = 6, n = 300;
    std::vector<int> labels(n);
    std::vector<float> logits(static_cast<std::size_t>(n * q), 0.0f);
    for (int i = 0; i < n; ++i) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(q));
        logits[static_cast<std::size_t>(i * q + labels[static_cast<std::size_t>(i)])] = 5.0f;
    }
    const auto r = evaluate_logits(logits, labels, q, default_ks());
    EXPECT_EQ(r.top(1), 1.0);
    EXPECT_EQ(r.top(3), 1.0);
    EXPECT_EQ(r.top(5), 1.0);
    for (int i = 0; i < q; ++i) {
        for (int j = 0; j < q; ++j) {
            if (i != j) {
                EXPECT_EQ(r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], 0U);
            }
        }
    }
}

TEST(Evaluate, RandomLogitsMatchChance)
{
    Rng rng(2);
    const int q = 64, n = 10000;
    std::vector<int> labels(n);
    std::vector<float> logits(static_cast<std::size_t>(n * q));
    for (auto& l : labels) {
        l = static_cast<int>(rng.uniform_int(q));
    }
    for (auto& v : logits) {
        v = static_cast<float>(rng.normal());
    }
    const auto r = evaluate_logits(logits, labels, q, default_ks());
    for (int k : {1, 3, 5}) {
        const double p = static_cast<double>(k) / q;
        EXPECT_NEAR(r.top(k), p, 3.0 * std::sqrt(p * (1 - p) / n)) << "top-" << k;
    }
}

TEST(Evaluate, IdentitiesHoldForArbitraryPredictor)
{
    Rng rng(3);
    const int q = 7, n = 500;
    std::vector<int> labels(n);
    std::vector<float> logits(static_cast<std::size_t>(n * q));
    for (int i = 0; i < n; ++i) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_int(q));
        for (int j = 0; j < q; ++j) {
            // biased towards the label so accuracy is neither 0 nor 1
            logits[static_cast<std::size_t>(i * q + j)] =
                static_cast<float>(rng.normal() + (j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0));
        }
    }
    const auto r = evaluate_logits(logits, labels, q, default_ks());
    EXPECT_LE(r.top(1), r.top(3));
    EXPECT_LE(r.top(3), r.top(5));
    EXPECT_LE(r.top(5), 1.0);
    std::uint64_t trace = 0, total = 0;
    for (int i = 0; i < q; ++i) {
        for (int j = 0; j < q; ++j) {
            total += r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
        trace += r.confusion[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)];
    }
    EXPECT_EQ(total, static_cast<std::uint64_t>(n));
    EXPECT_EQ(static_cast<double>(trace) / static_cast<double>(total), r.top(1));
}

TEST(Evaluate, ExhaustiveKIsOneAndEmptyIsError)
{
    const std::vector<float> logits{0.1f, 0.5f, 0.2f, 0.9f, 0.3f, 0.0f};
    const std::vector<int> labels{2, 1};
    const int ks[] = {3};
    EXPECT_EQ(evaluate_logits(logits, labels, 3, ks).top(3), 1.0);
    EXPECT_THROW(evaluate_logits({}, {}, 3, ks), EvaluationError);
    EXPECT_THROW(evaluate_logits(logits, std::vector<int>{2, 3}, 3, ks), IndexError);
}

TEST(Evaluate, ModelEvaluationMatchesLogitScoring)
{
    Trainer trainer(tiny_model(), short_run(1), tiny_data());
    trainer.run_epoch();
    const auto& test = trainer.prepared().split.test;
    const auto r = evaluate(trainer.model(), tiny_data(), test, trainer.prepared().scaler);
    EXPECT_EQ(r.count, test.size());
    EXPECT_THROW(evaluate(trainer.model(), tiny_data(), {}, trainer.prepared().scaler), EvaluationError);
}

TEST(Sweep, SingleArmEqualsPlainTrain)
{
    const TrainConfig t = short_run(2);
    const auto plain = train(tiny_model(), t, tiny_data());
    const double lrs[] = {t.lr};
    const auto sweep = lr_sweep(tiny_model(), t, tiny_data(), lrs);
    ASSERT_EQ(sweep.arms.size(), 1U);
    ASSERT_TRUE(sweep.arms[0].report.has_value());
    EXPECT_EQ(metrics_csv(sweep.arms[0].report->epochs), metrics_csv(plain.epochs));
    EXPECT_EQ(summary_json(sweep.arms[0].report->final_eval), summary_json(plain.final_eval));
}

TEST(Sweep, ArmsDifferOnlyInLearningRate)
{
    const TrainConfig t = short_run(2);
    const double lrs[] = {1e-3, 1e-4};
    const auto sweep = lr_sweep(tiny_model(), t, tiny_data(), lrs, 2);
    ASSERT_EQ(sweep.arms.size(), 2U);
    for (const auto& arm : sweep.arms) {
        TrainConfig single = t;
        single.lr = arm.lr;
        EXPECT_EQ(metrics_csv(arm.report->epochs), metrics_csv(train(tiny_model(), single, tiny_data()).epochs));
    }
    EXPECT_NE(metrics_csv(sweep.arms[0].report->epochs), metrics_csv(sweep.arms[1].report->epochs));
}

TEST(Sweep, DuplicatesDroppedAndFailuresIsolated)
{
    const TrainConfig t = short_run(1);
    const double lrs[] = {1e-4, -1.0, 1e-4};
    const auto sweep = lr_sweep(tiny_model(), t, tiny_data(), lrs);
    ASSERT_EQ(sweep.arms.size(), 2U);
    ASSERT_EQ(sweep.warnings.size(), 1U);
    EXPECT_NE(sweep.warnings[0].find("duplicate"), std::string::npos);
    EXPECT_TRUE(sweep.arms[0].report.has_value());
    EXPECT_FALSE(sweep.arms[1].report.has_value());
    EXPECT_FALSE(sweep.arms[1].error.empty());
    EXPECT_NE(sweep_csv(sweep).find("failed"), std::string::npos);
}

TEST(ConfusionTopn, DiagonalAndComplete)
{
    std::vector<std::vector<std::uint64_t>> diag(5, std::vector<std::uint64_t>(5, 0));
    for (std::size_t i = 0; i < 5; ++i) {
        diag[i][i] = i + 1;
    }
    const auto s = confusion_topn(diag, 3);
    EXPECT_EQ(s.classes, (std::vector<int>{4, 3, 2}));
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(s.percent[i][i], 100.0);
    }

    Rng rng(4);
    std::vector<std::vector<std::uint64_t>> full(6, std::vector<std::uint64_t>(6));
    for (auto& row : full) {
        for (auto& v : row) {
            v = 1 + rng.uniform_int(9);
        }
    }
    const auto all = confusion_topn(full, 6);
    for (std::size_t i = 0; i < 6; ++i) {
        double total = 0.0;
        for (double p : all.percent[i]) {
            total += p;
        }
        EXPECT_NEAR(total, 100.0, 1e-9);
        EXPECT_NEAR(all.excluded[i], 0.0, 1e-9);
    }
}

TEST(ConfusionTopn, TwoClassArithmetic)
{
    const auto s = confusion_topn({{8, 2}, {1, 9}}, 2);
    EXPECT_EQ(s.classes, (std::vector<int>{0, 1}));
    EXPECT_DOUBLE_EQ(s.percent[0][0], 80.0);
    EXPECT_DOUBLE_EQ(s.percent[0][1], 20.0);
    EXPECT_DOUBLE_EQ(s.percent[1][0], 10.0);
    EXPECT_DOUBLE_EQ(s.percent[1][1], 90.0);
}

TEST(ConfusionTopn, ExcludedMassAndBounds)
{
    const auto s = confusion_topn({{5, 0, 5}, {0, 2, 0}, {0, 0, 0}}, 1);
    EXPECT_EQ(s.classes, (std::vector<int>{0}));
    EXPECT_DOUBLE_EQ(s.percent[0][0], 50.0);
    EXPECT_DOUBLE_EQ(s.excluded[0], 50.0);
    EXPECT_THROW(confusion_topn({{5, 0, 5}, {0, 2, 0}, {0, 0, 0}}, 3), IndexError);
}

TEST(Report, CsvShapes)
{
    EpochRecord a;
    a.epoch = 0;
    a.lr = 1e-4;
    a.train_loss = 1.5;
    EpochRecord b = a;
    b.epoch = 1;
    b.eval = EvalResult{{1, 3, 5}, {0.5, 0.75, 1.0}, {}, 4};
    EXPECT_EQ(metrics_csv({a, b}), "epoch,lr,train_loss,top1,top3,top5\n1,1e-04,1.5,,,\n2,1e-04,1.5,0.5,0.75,1\n");
    EXPECT_EQ(confusion_csv({{1, 2}, {3, 4}}), "1,2\n3,4\n");
}
