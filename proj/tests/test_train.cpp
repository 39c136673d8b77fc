#include "ecalab/train.hpp"
#include "ecalab/rng.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace ecalab;
using namespace ecalab::model;

namespace {

datagen::PretrainConfig small_pretrain() {
    datagen::PretrainConfig c;
    c.sim_width = 32;
    c.sim_steps = 40;
    c.t_len = 4;
    c.x_len = 8;
    return c;
}

ModelConfig small_model(std::uint64_t seed = 5) {
    ModelConfig c;
    c.n_layers = 1;
    c.n_heads = 2;
    c.d_model = 16;
    c.d_ff = 32;
    c.context_len = 4;
    c.input_width = 8;
    c.output_width = 8;
    c.seed = seed;
    return c;
}

TrainConfig quick_train(std::size_t epochs) {
    TrainConfig t;
    t.lr = 1e-2;
    t.batch_size = 16;
    t.max_epochs = epochs;
    t.val_fraction = 0.25;
    t.seed = 9;
    return t;
}

}  // namespace

TEST_CASE("warm-up then cosine schedule") {
    const LrSchedule s(1.0, 0.0, 0.10, 101);
    CHECK(s.warmup_steps() == 10);
    CHECK(s.at(0) == 0.0);
    CHECK(s.at(5) == doctest::Approx(0.5));
    CHECK(s.at(10) == doctest::Approx(1.0));
    CHECK(s.at(55) == doctest::Approx(0.5));
    CHECK(s.at(100) == doctest::Approx(0.0));
    const LrSchedule floor(2.0, 0.5, 0.0, 11);
    CHECK(floor.at(0) == doctest::Approx(2.0));
    CHECK(floor.at(10) == doctest::Approx(0.5));
    for (std::size_t i = 10; i < 100; ++i) CHECK(s.at(i + 1) <= s.at(i));
    CHECK_THROWS_AS(LrSchedule(1.0, 0.0, 1.0, 10), Error);
    CHECK_THROWS_AS(LrSchedule(1.0, 0.0, 0.1, 0), Error);
}

TEST_CASE("global-norm clipping") {
    std::vector<double> g{3.0, 4.0};
    CHECK(clip_grad_norm<double>(g, 1.0) == doctest::Approx(5.0));
    CHECK(g[0] == doctest::Approx(0.6));
    CHECK(g[1] == doctest::Approx(0.8));
    std::vector<double> small{0.3, 0.4};
    clip_grad_norm<double>(small, 1.0);
    CHECK(small == std::vector<double>{0.3, 0.4});
}

TEST_CASE("Adam matches a hand-computed trajectory") {
    const double lr = 0.1, wd = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const std::vector<double> grads_seq{0.5, -0.2, 0.3};
    for (bool decoupled : {false, true}) {
        Adam<double> adam(2, {b1, b2, eps, wd, decoupled});
        std::vector<double> p{1.0, 2.0};
        const std::vector<std::uint8_t> trainable{1, 0};
        double ref = 1.0, m = 0, v = 0;
        for (std::size_t t = 1; t <= grads_seq.size(); ++t) {
            const std::vector<double> g{grads_seq[t - 1], 7.0};
            adam.step(p, g, lr, trainable);
            double gi = grads_seq[t - 1] + (decoupled ? 0.0 : wd * ref);
            m = b1 * m + (1 - b1) * gi;
            v = b2 * v + (1 - b2) * gi * gi;
            const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
            ref = ref - lr * mh / (std::sqrt(vh) + eps) - (decoupled ? lr * wd * ref : 0.0);
            CHECK(p[0] == doctest::Approx(ref).epsilon(1e-12));
            CHECK(p[1] == 2.0);
        }
        CHECK(adam.steps_taken() == 3);
    }
}

TEST_CASE("loss gradients match finite differences") {
    CounterRng rng(4);
    RowMatrix<double> logits(5, 3), targets(5, 3);
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        logits.data()[i] = rng.next_normal() * 2;
        targets.data()[i] = rng.next_double();
    }
    const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
    const std::vector<std::int32_t> next{2, -1, 0, 1, -1};
    RowMatrix<double> db, dt;
    binary_loss<double>(logits, targets, mask, &db);
    token_loss<double>(logits, next, &dt);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        auto up = logits, dn = logits;
        up.data()[i] += h;
        dn.data()[i] -= h;
        const double nb = (binary_loss<double>(up, targets, mask, nullptr) -
                           binary_loss<double>(dn, targets, mask, nullptr)) / (2 * h);
        const double nt = (token_loss<double>(up, next, nullptr) - token_loss<double>(dn, next, nullptr)) / (2 * h);
        CHECK(db.data()[i] == doctest::Approx(nb).epsilon(1e-6));
        CHECK(dt.data()[i] == doctest::Approx(nt).epsilon(1e-6));
    }
    RowMatrix<double> zero = RowMatrix<double>::Zero(1, 2), ones = RowMatrix<double>::Ones(1, 2);
    const std::vector<std::uint8_t> one{1};
    CHECK(binary_loss<double>(zero, ones, one, nullptr) == doctest::Approx(std::log(2.0)));
    const std::vector<std::int32_t> first{0};
    CHECK(token_loss<double>(zero, first, nullptr) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("efficiency is the reciprocal of the first epoch over threshold") {
    TrainHistory h;
    for (double acc : {0.5, 0.7, 0.85, 0.6}) h.epochs.push_back({h.epochs.size() + 1, 1, 1, acc, 0, 0});
    CHECK(efficiency(h) == doctest::Approx(1.0 / 3.0));
    CHECK(efficiency(h, 0.9) == 0.0);
    CHECK(efficiency(h, 0.5) == 1.0);
    CHECK(efficiency(TrainHistory{}) == 0.0);
}

TEST_CASE("task conversion and validation split") {
    const auto ds = datagen::gen_pretrain(eca::RuleId(30), 10, 1, 3, small_pretrain());
    const auto data = task_from_pretrain(ds);
    CHECK(data.count == 10);
    CHECK(data.len == 4);
    CHECK(data.in_width == 8);
    CHECK(data.out_width == 8);
    for (std::size_t s = 0; s < 10; ++s)
        for (std::size_t t = 0; t < 4; ++t) CHECK(data.mask[s * 4 + t] == (t == 3 ? 1 : 0));
    const auto [train, val] = split_validation(data, 0.1);
    CHECK(train.count == 9);
    CHECK(val.count == 1);
    CHECK(std::equal(val.inputs.begin(), val.inputs.end(), data.inputs.end() - 32));
    CHECK(split_validation(data, 0.01).second.count == 1);
    CHECK(thrown_kind([&] { split_validation(data, 0.0); }) == ErrorKind::config_error);
    CHECK(split_validation(data, 0.99).first.count == 1);
    CHECK(thrown_kind([&] { split_validation(data, 1.0); }) == ErrorKind::config_error);

    const auto easy = datagen::gen_reasoning_easy(3, 5, 1);
    const auto r = task_from_reasoning(easy);
    CHECK(r.len == 4);
    CHECK(r.group_size == 5);
    CHECK(r.in_width == 10 * 10 * 5);
}

TEST_CASE("finetuning presets") {
    const auto e = finetune_preset(datagen::TaskKind::reasoning_easy);
    CHECK(e.lr == 1e-4);
    CHECK(e.max_epochs == 1000);
    const auto h = finetune_preset(datagen::TaskKind::reasoning_hard);
    CHECK(h.lr == 1e-5);
    CHECK(h.max_epochs == 10000);
    CHECK(train_config_from_json(to_json(h)) == h);
}

TEST_CASE("pretraining learns the identity rule and is reproducible") {
    const auto ds = datagen::gen_pretrain(eca::RuleId(204), 96, 1, 1, small_pretrain());
    auto cfg = quick_train(40);
    cfg.stop_at_accuracy = 0.99;
    const auto a = train_pretrain(ds, small_model(), cfg);
    const auto b = train_pretrain(ds, small_model(), cfg);
    CHECK(a.history == b.history);
    CHECK(a.checkpoint.values == b.checkpoint.values);
    CHECK(a.history.stop_reason == "target-accuracy");
    CHECK(evaluate(a.checkpoint, datagen::Dataset{ds}).accuracy() >= 0.99);
    CHECK(a.history.lr_trace.size() == a.history.epochs.size() * 5);

    const auto c = train_pretrain(ds, small_model(6), cfg);
    CHECK(c.checkpoint.values != a.checkpoint.values);
}

TEST_CASE("restore-best keeps the lowest validation loss") {
    const auto ds = datagen::gen_pretrain(eca::RuleId(30), 64, 1, 2, small_pretrain());
    auto cfg = quick_train(12);
    cfg.lr = 5e-2;
    cfg.patience = 3;
    const auto r = train_pretrain(ds, small_model(), cfg);
    CHECK((r.history.stop_reason == "early-stopping" || r.history.stop_reason == "max-epochs"));
    REQUIRE(r.history.best_epoch >= 1);
    double best = 1e9;
    for (const auto& e : r.history.epochs) best = std::min(best, e.val_loss);
    CHECK(r.history.epochs[r.history.best_epoch - 1].val_loss == best);
    auto [train, val] = split_validation(task_from_pretrain(ds), cfg.val_fraction);
    CHECK(evaluate(r.checkpoint.model(), val, cfg.batch_size).loss == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("frozen finetuning leaves the backbone bit-identical") {
    const auto ds = datagen::gen_pretrain(eca::RuleId(110), 48, 1, 4, small_pretrain());
    const auto pre = train_pretrain(ds, small_model(), quick_train(3));
    const auto easy = datagen::gen_reasoning_easy(24, 4, 2);
    auto data = task_from_reasoning(easy);
    auto [train, val] = split_validation(data, 0.25);
    auto cfg = quick_train(3);
    const auto ft = finetune_frozen(pre.checkpoint, train, val, head_for(data), cfg);
    CHECK(backbone_hash(ft.checkpoint) == backbone_hash(pre.checkpoint));
    const auto before = pre.checkpoint.model();
    const auto after = ft.checkpoint.model();
    for (const auto& t : after.layout().tensors()) {
        if (!t.backbone) continue;
        CHECK_MESSAGE(after.tensor(t.name) == before.tensor(t.name), t.name);
    }
    CHECK(after.config().input_width == data.in_width);
    CHECK(ft.checkpoint.provenance["backbone_hash"] == backbone_hash(pre.checkpoint));

    auto long_data = task_from_reasoning(datagen::gen_reasoning_easy(4, 7, 2));
    CHECK(thrown_kind([&] { finetune_frozen(pre.checkpoint, long_data, long_data, head_for(long_data), cfg); }) ==
          ErrorKind::contract_error);
}

TEST_CASE("non-finite parameters surface as numeric failure") {
    const auto ds = datagen::gen_pretrain(eca::RuleId(30), 16, 1, 2, small_pretrain());
    auto [train, val] = split_validation(task_from_pretrain(ds), 0.25);
    Transformer<float> m(small_model());
    m.tensor("out_proj.bias").setConstant(std::nanf(""));
    const std::vector<std::uint8_t> all(m.params().size(), 1);
    CHECK(thrown_kind([&] { fit(m, train, val, quick_train(1), all, true); }) == ErrorKind::numeric_failure);
}

TEST_CASE("checkpoint container round-trips and rejects corruption") {
    ModelConfig c = small_model();
    c.head = HeadKind::tokens;
    c.vocab_size = 11;
    const Transformer<float> m(c);
    const auto ckpt = ModelCheckpoint::from(m, {{"note", "x"}});
    const auto bytes = serialize_checkpoint(ckpt);
    CHECK(bytes.substr(0, 4) == "ECK1");
    const auto back = deserialize_checkpoint(bytes);
    CHECK(back.config == c);
    CHECK(back.values == ckpt.values);
    CHECK(back.provenance == ckpt.provenance);
    CHECK(serialize_checkpoint(back) == bytes);
    CHECK(backbone_hash(back) == backbone_hash(m));

    auto flipped = bytes;
    flipped[flipped.size() - 3] ^= 0x10;
    CHECK(thrown_kind([&] { deserialize_checkpoint(flipped); }) == ErrorKind::format_error);
    CHECK(thrown_kind([&] { deserialize_checkpoint(bytes.substr(0, bytes.size() - 4)); }) ==
          ErrorKind::format_error);
    CHECK(thrown_kind([&] { deserialize_checkpoint(bytes + "xxxx"); }) == ErrorKind::format_error);
    auto magic = bytes;
    magic[0] = 'X';
    CHECK(thrown_kind([&] { deserialize_checkpoint(magic); }) == ErrorKind::format_error);
    CHECK(thrown_kind([&] { deserialize_checkpoint("EC"); }) == ErrorKind::format_error);

    // Head-only change keeps the backbone hash; a backbone change does not.
    Transformer<float> other(c, ckpt.values);
    other.tensor("out_proj.bias").setConstant(1.0f);
    CHECK(backbone_hash(other) == backbone_hash(m));
    other.tensor("ln_f.beta")(0, 0) += 1.0f;
    CHECK(backbone_hash(other) != backbone_hash(m));
}
