#include "fedka/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "fedka/anchor.hpp"
#include "fedka/error.hpp"
#include "fedka/nn.hpp"
#include "fedka/rng.hpp"

namespace fedka::check {

namespace {

struct Problem {
    std::string name;
    nn::NetworkSpec spec;
    nn::Shape input;
    std::size_t batch = 0;
    std::size_t anchor = 0;
};

nn::Matrix random_inputs(std::size_t rows, std::size_t cols, Rng& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    nn::Matrix m(rows, cols);
    for (auto& v : m.data) v = n01(rng);
    return m;
}

// ReLU signs and max-pool winners on every input set; a coordinate whose
// +-step perturbation changes this is sitting on a kink.
std::vector<std::uint32_t> pattern(const nn::ModelState& s, const nn::NetworkSpec& spec,
                                   const std::vector<const nn::Matrix*>& inputs) {
    std::vector<std::uint32_t> out;
    for (const auto* in : inputs) {
        const auto fwd = nn::forward_pass(s, spec, *in);
        for (std::size_t j = 0; j < spec.layers.size(); ++j)
            if (spec.layers[j].kind == nn::LayerKind::relu)
                for (double v : fwd.values[j]) out.push_back(v > 0.0);
        for (const auto& a : fwd.pool_argmax) out.insert(out.end(), a.begin(), a.end());
    }
    return out;
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(const GradcheckOptions& opts) {
    if (opts.coords == 0 || !(opts.step > 0.0)) throw Error("gradcheck needs coords > 0 and step > 0");

    std::vector<Problem> problems;
    problems.push_back({"mlp", nn::mlp(6, {10, 8}, 4), {6}, 16, 3});
    if (opts.include_cnn) {
        nn::NetworkSpec small;
        small.input_shape = {2, 8, 8};
        small.class_count = 4;
        small.layers = {nn::LayerDesc::conv2d(2, 3, 3), nn::LayerDesc::relu(), nn::LayerDesc::maxpool(2),
                        nn::LayerDesc::flatten(), nn::LayerDesc::dense(27, 4)};
        problems.push_back({"small_cnn", small, {2, 8, 8}, 6, 3});
        problems.push_back({"t_cnn", nn::t_cnn({1, 28, 28}, 10), {1, 28, 28}, 2, 2});
    }

    std::vector<GradcheckResult> results;
    for (const auto& p : problems) {
        p.spec.validate();
        const std::size_t feat = nn::shape_size(p.input);
        for (std::uint64_t seed = 1; seed <= opts.seeds; ++seed) {
            Rng rng = make_rng(seed, "gradcheck", fnv1a(p.name));
            nn::Batch batch;
            batch.inputs = random_inputs(p.batch, feat, rng);
            std::uniform_int_distribution<int> lab(0, static_cast<int>(p.spec.class_count) - 1);
            for (std::size_t i = 0; i < p.batch; ++i) batch.labels.push_back(lab(rng));
            const nn::Matrix anchor_in = random_inputs(p.anchor, feat, rng);

            const nn::ModelState global = nn::init_state(p.spec, rng);
            nn::ModelState local = global;
            std::normal_distribution<double> jitter(0.0, 0.05);
            for (auto& v : local.params) v += jitter(rng);
            const std::vector<int> dominant{0};

            using Obj = std::function<nn::LossGrad(const nn::ModelState&, bool)>;
            const Obj ce = [&](const nn::ModelState& s, bool with_grad) {
                if (with_grad) return nn::ce_loss_and_grad(s, p.spec, batch);
                nn::Matrix dl;
                return nn::LossGrad{
                    nn::ce_loss_and_dlogits(nn::forward_logits(s, p.spec, batch.inputs), batch.labels, dl), {}};
            };
            const Obj prox = [&](const nn::ModelState& s, bool with_grad) {
                auto lg = ce(s, with_grad);
                double sq = 0.0;
                for (std::size_t i = 0; i < s.params.size(); ++i) {
                    const double d = s.params[i] - global.params[i];
                    sq += d * d;
                    if (with_grad) lg.grad[i] += opts.prox_mu * d;
                }
                lg.loss += 0.5 * opts.prox_mu * sq;
                return lg;
            };
            const Obj ka = [&](const nn::ModelState& s, bool with_grad) {
                auto lg = ce(s, with_grad);
                const auto k = anchor::ka_loss_and_grad(anchor_in, global, s, p.spec, dominant);
                lg.loss += opts.beta * k.loss;
                if (with_grad)
                    for (std::size_t i = 0; i < lg.grad.size(); ++i) lg.grad[i] += opts.beta * k.grad[i];
                return lg;
            };

            const std::vector<std::pair<std::string, const Obj*>> objectives{
                {"ce", &ce}, {"fedprox", &prox}, {"ce+ka", &ka}};
            for (const auto& [oname, obj] : objectives) {
                GradcheckResult r;
                r.model = p.name;
                r.objective = oname;
                r.seed = seed;
                std::vector<const nn::Matrix*> ins{&batch.inputs};
                if (oname == "ce+ka") ins.push_back(&anchor_in);

                const auto analytic = (*obj)(local, true).grad;
                const auto base = pattern(local, p.spec, ins);
                std::vector<std::size_t> order(local.params.size());
                std::iota(order.begin(), order.end(), 0);
                std::shuffle(order.begin(), order.end(), rng);

                nn::ModelState probe = local;
                for (std::size_t c : order) {
                    if (r.coords_checked == opts.coords) break;
                    const double orig = probe.params[c];
                    probe.params[c] = orig + opts.step;
                    const double up = (*obj)(probe, false).loss;
                    const bool flip_up = pattern(probe, p.spec, ins) != base;
                    probe.params[c] = orig - opts.step;
                    const double down = (*obj)(probe, false).loss;
                    const bool flip_down = pattern(probe, p.spec, ins) != base;
                    probe.params[c] = orig;
                    if (flip_up || flip_down) {
                        ++r.coords_skipped;
                        continue;
                    }
                    const double central = (up - down) / (2.0 * opts.step);
                    const double denom = std::max({std::abs(analytic[c]), std::abs(central), 1e-12});
                    r.max_rel_error = std::max(r.max_rel_error, std::abs(analytic[c] - central) / denom);
                    ++r.coords_checked;
                }
                r.passed = r.coords_checked == std::min(opts.coords, local.params.size()) &&
                           r.max_rel_error < opts.tolerance;
                results.push_back(r);
            }
        }
    }
    return results;
}

}  // namespace fedka::check
