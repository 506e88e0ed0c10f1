#include "cpnav/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "cpnav/checkpoint.hpp"
#include "cpnav/ops.hpp"
#include "cpnav/rng.hpp"

namespace cpnav {

void validate(const TrainConfig& c) {
    if (!(c.base_lr > 0) || !(c.momentum >= 0 && c.momentum < 1) || c.batch_size < 1 || c.iterations < 0 ||
        !(c.head_lr_mult > 0) || !(c.decay_factor > 0))
        throw DomainError("invalid training configuration");
}

double lr_decay(const TrainConfig& config, int iteration) {
    double f = 1.0;
    if (iteration >= config.iterations / 3) f *= config.decay_factor;
    if (iteration >= 2 * config.iterations / 3) f *= config.decay_factor;
    return f;
}

namespace {

void scale_gradients(Gradients& g, float s) {
    for (LayerParams& p : g) {
        for (float& v : p.weights.values()) v *= s;
        for (float& v : p.bias.values()) v *= s;
    }
}

std::filesystem::path boundary_path(const std::filesystem::path& base, int iteration) {
    std::filesystem::path p = base;
    p += ".iter" + std::to_string(iteration);
    return p;
}

}  // namespace

TrainResult finetune(const Network& network, const ImageStore& train, const ImageStore* holdout,
                     const TrainConfig& config, const TrainLogger& logger) {
    validate(config);
    if (network.num_classes() != kNumCommands) throw DomainError("finetune expects a six-way command head");
    TrainResult result{network, {}};
    if (config.iterations == 0) {
        if (holdout && holdout->size() > 0) result.report.holdout = evaluate(result.network, *holdout);
        return result;
    }
    if (train.size() == 0) throw DomainError("training split is empty");

    std::vector<std::size_t> all(train.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    BatchStream batches(std::move(all), config.batch_size, mix_seed(config.seed, 0xBA7C));
    SgdMomentum sgd(config.momentum);
    const int b1 = config.iterations / 3, b2 = 2 * config.iterations / 3;

    for (int it = 0; it < config.iterations; ++it) {
        const std::vector<std::size_t> batch = batches.next();
        Gradients grads = result.network.zero_gradients();
        double loss_sum = 0.0;
        try {
            for (std::size_t idx : batch) {
                ForwardTape tape;
                const Tensor logits = result.network.forward(train.image(idx), &tape);
                const ops::LossAndGrad<float> lg = ops::softmax_cross_entropy(logits, to_index(train.label(idx)));
                loss_sum += lg.loss;
                result.network.backward(tape, lg.logit_grad, &grads);
            }
        } catch (const NumericError& e) {
            result.report.loss_curve.push_back(std::numeric_limits<double>::quiet_NaN());
            throw TrainingDiverged("training diverged at iteration " + std::to_string(it) + ": " + e.what(), result.report);
        }
        const double loss = loss_sum / static_cast<double>(batch.size());
        result.report.loss_curve.push_back(loss);
        if (!std::isfinite(loss) || loss > 1e3) {
            char msg[160];
            std::snprintf(msg, sizeof msg, "training diverged at iteration %d (loss %g)", it, loss);
            throw TrainingDiverged(msg, result.report);
        }
        scale_gradients(grads, 1.0f / static_cast<float>(batch.size()));
        const double lr = config.base_lr * lr_decay(config, it);
        sgd.step(result.network, grads, lr);
        if (logger && config.log_every > 0 && (it % config.log_every == 0 || it + 1 == config.iterations))
            logger(it, loss, lr);

        const int done = it + 1;
        if (config.checkpoint_path && (done == b1 || done == b2) && done < config.iterations) {
            const auto p = boundary_path(*config.checkpoint_path, done);
            save_checkpoint(result.network, p);
            result.report.checkpoints.push_back(p);
        }
    }
    if (config.checkpoint_path) {
        save_checkpoint(result.network, *config.checkpoint_path);
        result.report.checkpoints.push_back(*config.checkpoint_path);
    }
    if (holdout && holdout->size() > 0) result.report.holdout = evaluate(result.network, *holdout);
    return result;
}

EvalReport evaluate(const Network& network, const ImageStore& data) {
    EvalReport r;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Prediction p = predict(network, data.image(i));
        const int truth = to_index(data.label(i));
        ++r.confusion[static_cast<std::size_t>(truth)][static_cast<std::size_t>(to_index(p.command))];
        ++r.per_class_count[static_cast<std::size_t>(truth)];
        ++r.total;
    }
    std::int64_t correct = 0;
    for (int k = 0; k < kNumCommands; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        correct += r.confusion[ku][ku];
        r.per_class_accuracy[ku] =
            r.per_class_count[ku] ? static_cast<double>(r.confusion[ku][ku]) / static_cast<double>(r.per_class_count[ku]) : 0.0;
    }
    r.accuracy = r.total ? static_cast<double>(correct) / static_cast<double>(r.total) : 0.0;
    return r;
}

EvalReport evaluate_split(const Network& network, const std::filesystem::path& dir, const Manifest& manifest,
                          const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw DomainError("evaluation split is empty");
    return evaluate(network, ImageStore(dir, manifest, indices));
}

std::string EvalReport::format() const {
    std::ostringstream os;
    char line[200];
    std::snprintf(line, sizeof line, "accuracy %.4f over %lld samples\n", accuracy, static_cast<long long>(total));
    os << line;
    os << "truth \\ predicted   MF     MR     ML     SR     SL     ST   | acc\n";
    static const char* abbrev[] = {"MF", "MR", "ML", "SR", "SL", "ST"};
    for (int t = 0; t < kNumCommands; ++t) {
        const auto tu = static_cast<std::size_t>(t);
        std::snprintf(line, sizeof line, "%-18s", abbrev[t]);
        os << line;
        for (int p = 0; p < kNumCommands; ++p) {
            std::snprintf(line, sizeof line, " %6lld", static_cast<long long>(confusion[tu][static_cast<std::size_t>(p)]));
            os << line;
        }
        std::snprintf(line, sizeof line, " | %.3f\n", per_class_accuracy[tu]);
        os << line;
    }
    return os.str();
}

}  // namespace cpnav
