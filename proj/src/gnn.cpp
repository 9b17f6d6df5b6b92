#include "bandalloc/gnn.hpp"

#include <algorithm>
#include <cmath>

#include "bandalloc/csv.hpp"
#include "bandalloc/errors.hpp"
#include "json.hpp"

namespace bandalloc {

std::string_view to_string(Activation a) {
    return a == Activation::ReLU ? "relu" : "tanh";
}

Activation parse_activation(std::string_view s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "tanh") return Activation::Tanh;
    throw ValidationError("unknown activation: " + std::string(s));
}

void FnnArchitecture::validate() const {
    if (layer_sizes.size() < 2) throw ValidationError("FNN needs at least an input and output layer");
    if (layer_sizes.front() != 2) throw ValidationError("FNN input size must be 2");
    if (layer_sizes.back() != 1) throw ValidationError("FNN output size must be 1");
    for (int s : layer_sizes) {
        if (s <= 0) throw ValidationError("layer sizes must be positive");
    }
}

std::size_t FnnArchitecture::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        n += static_cast<std::size_t>(layer_sizes[l + 1]) * (layer_sizes[l] + 1);
    }
    return n;
}

GnnParams::GnnParams(FnnArchitecture arch) : arch_(std::move(arch)) {
    arch_.validate();
    std::size_t off = 0;
    for (std::size_t l = 0; l < arch_.num_layers(); ++l) {
        offsets_.push_back(off);
        off += static_cast<std::size_t>(arch_.layer_sizes[l + 1]) * (arch_.layer_sizes[l] + 1);
    }
    data_.assign(off, 0.0);
}

std::span<double> GnnParams::weights(std::size_t l) {
    const auto n = static_cast<std::size_t>(arch_.layer_sizes[l + 1]) * arch_.layer_sizes[l];
    return std::span<double>(data_).subspan(offsets_.at(l), n);
}

std::span<const double> GnnParams::weights(std::size_t l) const {
    const auto n = static_cast<std::size_t>(arch_.layer_sizes[l + 1]) * arch_.layer_sizes[l];
    return std::span<const double>(data_).subspan(offsets_.at(l), n);
}

std::span<double> GnnParams::bias(std::size_t l) {
    const auto in = static_cast<std::size_t>(arch_.layer_sizes[l]);
    const auto out = static_cast<std::size_t>(arch_.layer_sizes[l + 1]);
    return std::span<double>(data_).subspan(offsets_.at(l) + out * in, out);
}

std::span<const double> GnnParams::bias(std::size_t l) const {
    const auto in = static_cast<std::size_t>(arch_.layer_sizes[l]);
    const auto out = static_cast<std::size_t>(arch_.layer_sizes[l + 1]);
    return std::span<const double>(data_).subspan(offsets_.at(l) + out * in, out);
}

void GnnParams::add_scaled(const GnnParams& other, double alpha) {
    if (other.arch_ != arch_) throw ValidationError("add_scaled: architecture mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * other.data_[i];
}

bool GnnParams::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

GnnParams init_params(const FnnArchitecture& arch, const RngStream& stream) {
    GnnParams p(arch);
    Rng rng(stream);
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        const double fan_in = arch.layer_sizes[l];
        const double fan_out = arch.layer_sizes[l + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (double& w : p.weights(l)) w = rng.uniform(-bound, bound);
    }
    return p;
}

namespace {

double activate(Activation a, double z) {
    return a == Activation::ReLU ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

double activate_slope(Activation a, double z, double out) {
    return a == Activation::ReLU ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - out * out;
}

}  // namespace

ForwardTrace forward(const GnnParams& params, const ScheduleResult& sched) {
    const std::size_t K = sched.size();
    if (K == 0) throw DomainError("forward: empty schedule");
    const auto& sizes = params.arch().layer_sizes;
    const std::size_t L = params.arch().num_layers();

    ForwardTrace t;
    t.users = K;
    t.surplus = sched.surplus_normalized;
    t.activations.resize(L + 1);
    t.pre_activations.resize(L + 1);
    t.activations[0].resize(K * 2);
    for (std::size_t k = 0; k < K; ++k) {
        t.activations[0][2 * k] = sched.w_min_normalized[k];
        t.activations[0][2 * k + 1] = sched.surplus_normalized;
    }
    for (std::size_t l = 0; l < L; ++l) {
        const auto in = static_cast<std::size_t>(sizes[l]);
        const auto out = static_cast<std::size_t>(sizes[l + 1]);
        const auto W = params.weights(l);
        const auto b = params.bias(l);
        const bool last = l + 1 == L;
        auto& z = t.pre_activations[l + 1];
        auto& a = t.activations[l + 1];
        z.resize(K * out);
        a.resize(K * out);
        const auto& prev = t.activations[l];
        for (std::size_t k = 0; k < K; ++k) {
            const double* x = prev.data() + k * in;
            for (std::size_t o = 0; o < out; ++o) {
                const double* row = W.data() + o * in;
                double acc = b[o];
                for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
                z[k * out + o] = acc;
                a[k * out + o] = last ? acc : activate(params.arch().hidden, acc);
            }
        }
        t.multiplies += K * in * out;
    }

    t.logits = t.activations[L];
    const double xmax = *std::max_element(t.logits.begin(), t.logits.end());
    t.y.resize(K);
    for (std::size_t k = 0; k < K; ++k) t.y[k] = std::exp(t.logits[k] - xmax);
    // Sorted summation keeps the result independent of user order.
    std::vector<double> sorted = t.y;
    std::sort(sorted.begin(), sorted.end());
    double denom = 0.0;
    for (double e : sorted) denom += e;
    t.w_tilde.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        t.y[k] /= denom;
        t.w_tilde[k] = t.y[k] * sched.surplus_normalized + sched.w_min_normalized[k];
    }
    t.multiplies += 2 * K;
    return t;
}

void backward(const GnnParams& params, const ForwardTrace& t, std::span<const double> upstream,
              GnnParams& grad, double scale) {
    const std::size_t K = t.users;
    if (upstream.size() != K || grad.arch() != params.arch()) {
        throw ValidationError("backward: shape mismatch");
    }
    // Readout then softmax: dL/dx_j = y_j (g_j - sum_k y_k g_k), g = dL/dy.
    std::vector<double> g(K);
    double mean = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        g[k] = upstream[k] * t.surplus;
        mean += t.y[k] * g[k];
    }
    std::vector<double> dlogit(K);
    bool any = false;
    for (std::size_t k = 0; k < K; ++k) {
        dlogit[k] = t.y[k] * (g[k] - mean);
        any = any || dlogit[k] != 0.0;
    }
    if (!any) return;

    const auto& sizes = params.arch().layer_sizes;
    const std::size_t L = params.arch().num_layers();
    const Activation act = params.arch().hidden;
    std::vector<double> delta;
    std::vector<double> prev_delta;
    for (std::size_t k = 0; k < K; ++k) {
        if (dlogit[k] == 0.0) continue;
        delta.assign(1, dlogit[k] * scale);
        for (std::size_t l = L; l-- > 0;) {
            const auto in = static_cast<std::size_t>(sizes[l]);
            const auto out = static_cast<std::size_t>(sizes[l + 1]);
            const double* x = t.activations[l].data() + k * in;
            auto gW = grad.weights(l);
            auto gb = grad.bias(l);
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o];
                if (d == 0.0) continue;
                gb[o] += d;
                double* row = gW.data() + o * in;
                for (std::size_t i = 0; i < in; ++i) row[i] += d * x[i];
            }
            if (l == 0) break;
            const auto W = params.weights(l);
            prev_delta.assign(in, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o];
                if (d == 0.0) continue;
                const double* row = W.data() + o * in;
                for (std::size_t i = 0; i < in; ++i) prev_delta[i] += row[i] * d;
            }
            const double* z = t.pre_activations[l].data() + k * in;
            const double* a = t.activations[l].data() + k * in;
            for (std::size_t i = 0; i < in; ++i) prev_delta[i] *= activate_slope(act, z[i], a[i]);
            delta.swap(prev_delta);
        }
    }
}

double sample_objective(const GnnParams& params, const ScheduleResult& sched,
                        const RewardModel& model, const ChannelSample& sample, GnnParams* grad,
                        double scale) {
    if (sched.empty()) return 0.0;
    const ForwardTrace t = forward(params, sched);
    const double W = sched.budget_hz;
    const std::size_t K = sched.size();
    double total = 0.0;
    std::vector<double> upstream(grad ? K : 0);
    for (std::size_t k = 0; k < K; ++k) {
        const LinkBudget lb = model.user_budget(sample, sched.scheduled[k]);
        const double w = t.w_tilde[k] * W;
        total += reward(w, lb, model.inputs);
        if (grad) upstream[k] = W * reward_derivative(w, lb, model.inputs);
    }
    if (grad) backward(params, t, upstream, *grad, scale);
    return total;
}

Allocation gnn_allocate(const GnnParams& params, const ScheduleResult& sched,
                        const RewardModel& model, const ChannelSample& sample,
                        OpCounters* counters) {
    if (sched.empty()) return {};
    const ForwardTrace t = forward(params, sched);
    if (counters) counters->fnn_multiplies += t.multiplies;
    std::vector<double> w(sched.size());
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = t.w_tilde[k] * sched.budget_hz;
    // The readout guarantees w >= w_min only up to rounding.
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::max(w[k], sched.w_min[k]);
    enforce_budget(w, sched.w_min, sched.budget_hz);
    return evaluate_allocation(sched, model, sample, std::move(w));
}

namespace {

void append_array(std::string& out, std::span<const double> v) {
    out += '[';
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += csv::number(v[i]);
    }
    out += ']';
}

}  // namespace

std::string save_params(const GnnParams& params) {
    const auto& arch = params.arch();
    std::string out = "{\"layer_sizes\":[";
    for (std::size_t i = 0; i < arch.layer_sizes.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(arch.layer_sizes[i]);
    }
    out += "],\"activation\":\"";
    out += to_string(arch.hidden);
    out += "\",\"ordering\":\"row-major, out x in\",\"layers\":[";
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        if (l) out += ',';
        out += "{\"w\":";
        append_array(out, params.weights(l));
        out += ",\"b\":";
        append_array(out, params.bias(l));
        out += '}';
    }
    out += "]}\n";
    return out;
}

GnnParams load_params(std::string_view document) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(document);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    FnnArchitecture arch;
    std::vector<std::vector<double>> ws;
    std::vector<std::vector<double>> bs;
    try {
        arch.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        arch.hidden = parse_activation(j.value("activation", std::string("relu")));
        for (const auto& layer : j.at("layers")) {
            ws.push_back(layer.at("w").get<std::vector<double>>());
            bs.push_back(layer.at("b").get<std::vector<double>>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
    arch.validate();
    if (ws.size() != arch.num_layers()) throw ValidationError("checkpoint: wrong number of layers");
    GnnParams p(arch);
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
        auto W = p.weights(l);
        auto b = p.bias(l);
        if (ws[l].size() != W.size() || bs[l].size() != b.size()) {
            throw ValidationError("checkpoint: layer " + std::to_string(l) + " shape mismatch");
        }
        std::copy(ws[l].begin(), ws[l].end(), W.begin());
        std::copy(bs[l].begin(), bs[l].end(), b.begin());
    }
    if (!p.all_finite()) throw ValidationError("checkpoint: non-finite parameter");
    return p;
}

}  // namespace bandalloc
