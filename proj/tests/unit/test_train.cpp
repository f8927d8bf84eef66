#include <doctest.h>

#include <cmath>

#include "ddiff/data.hpp"
#include "ddiff/train.hpp"

using namespace ddiff;

namespace {

ParamSet one_scalar(double w) {
    ParamSet p;
    p.add("w", Matrix(1, 1, w));
    return p;
}

std::vector<Matrix> grad_of(double g) { return {Matrix(1, 1, g)}; }

Dataset repeated(const Sequence& s, int count, int label = -1, int classes = 0) {
    Dataset d;
    d.sequences.assign(static_cast<std::size_t>(count), s);
    if (label >= 0) {
        d.labels.assign(static_cast<std::size_t>(count), label);
        d.num_classes = classes;
    }
    return d;
}

}  // namespace

TEST_CASE("optimizer steps") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        for (auto kind : {OptimizerKind::sgd, OptimizerKind::adam}) {
            auto p = one_scalar(0.7);
            Optimizer opt({kind, 0.1});
            opt.step(p, grad_of(0.0));
            CHECK(p.at("w")(0, 0) == 0.7);
        }
    }
    SUBCASE("sgd on w^2") {
        auto p = one_scalar(1.0);
        Optimizer opt({OptimizerKind::sgd, 0.1});
        opt.step(p, grad_of(2.0 * p.at("w")(0, 0)));
        CHECK(p.at("w")(0, 0) == doctest::Approx(0.8).epsilon(1e-15));
    }
    SUBCASE("first adam step moves by lr") {
        for (double g : {1e-3, 0.5, -40.0}) {
            auto p = one_scalar(2.0);
            Optimizer opt({OptimizerKind::adam, 0.01});
            opt.step(p, grad_of(g));
            CHECK(std::abs(p.at("w")(0, 0) - 2.0) == doctest::Approx(0.01).epsilon(1e-4));
        }
    }
    SUBCASE("non-finite gradient") {
        auto p = one_scalar(1.0);
        Optimizer opt({});
        CHECK_THROWS_AS(opt.step(p, grad_of(std::nan(""))), NumericError);
        CHECK(p.at("w")(0, 0) == 1.0);
        CHECK_THROWS_AS(opt.step(p, {}), ContractError);
    }
}

TEST_CASE("dropout helper") {
    Rng rng(1);
    CHECK(drop_condition(2, 0.0, rng) == 2);
    CHECK(drop_condition(2, 1.0, rng) == kDropped);
}

TEST_CASE("a single repeated sequence is learned") {
    const auto data = repeated({0, 2, 1, 2}, 256);
    const TrunkShape shape{3, 4, 16, 1, 0};
    TrainConfig cfg;
    cfg.epochs = 40;
    cfg.batch_size = 32;
    cfg.optimizer.lr = 0.01;
    cfg.seed = 4;
    const auto r = train_denoiser(data, ModelKind::uniform, shape, NoiseSchedule{}, cfg);
    REQUIRE(r.loss_trace.size() == 40);
    MESSAGE("first " << r.loss_trace.front() << " last " << r.loss_trace.back());
    // The minimum of the objective for a point mass is zero.
    CHECK(r.loss_trace.back() < 0.05 * r.loss_trace.front());
    double early = 0.0, late = 0.0;
    for (int e = 0; e < 5; ++e) {
        early += r.loss_trace[static_cast<std::size_t>(e)];
        late += r.loss_trace[r.loss_trace.size() - 1 - static_cast<std::size_t>(e)];
    }
    CHECK(late < early);
}

TEST_CASE("full dropout never touches the class rows") {
    const auto data = gen_labeled_corpus(3, 4, 128, LabelRule::majority_token, 6);
    const TrunkShape shape{3, 4, 8, 1, 3};
    const auto init = DenoiserParams::random(shape, 9);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    cfg.condition_dropout = 1.0;
    const auto r = train_denoiser(data, ModelKind::uniform, shape, NoiseSchedule{}, cfg, init);
    const Matrix& before = init.tensors.at("condition_embedding");
    const Matrix& after = r.params.tensors.at("condition_embedding");
    for (int c = 0; c < 3; ++c) {
        for (int j = 0; j < shape.hidden; ++j) {
            CHECK(after(c, j) == before(c, j));
        }
    }
    bool dropped_row_moved = false;
    for (int j = 0; j < shape.hidden; ++j) {
        dropped_row_moved |= after(3, j) != before(3, j);
    }
    CHECK(dropped_row_moved);
}

TEST_CASE("training is reproducible across thread counts") {
    const auto data = gen_labeled_corpus(3, 4, 100, LabelRule::majority_token, 1);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 40;
    cfg.seed = 12;
    for (auto kind : {ModelKind::uniform, ModelKind::absorbing}) {
        const TrunkShape s{kind == ModelKind::absorbing ? 4 : 3, 4, 8, 2, 3};
        cfg.loss.objective = kind == ModelKind::absorbing ? Objective::mdlm_continuous : Objective::udlm_continuous;
        cfg.threads = 1;
        const auto a = train_denoiser(data, kind, s, NoiseSchedule{}, cfg);
        cfg.threads = 3;
        const auto b = train_denoiser(data, kind, s, NoiseSchedule{}, cfg);
        CHECK(a.params.tensors == b.params.tensors);
        CHECK(a.loss_trace == b.loss_trace);
    }
}

TEST_CASE("classifier training lowers the loss") {
    const auto data = gen_labeled_corpus(3, 4, 400, LabelRule::prefix_class, 2, 3);
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 32;
    cfg.optimizer.lr = 0.01;
    const auto r = train_classifier(data, PriorSpec::uniform(3), TrunkShape{3, 4, 16, 1, 3}, NoiseSchedule{}, cfg);
    REQUIRE(r.loss_trace.size() == 8);
    CHECK(r.loss_trace.back() < r.loss_trace.front());
}
