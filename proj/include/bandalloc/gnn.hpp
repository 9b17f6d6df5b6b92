#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bandalloc/allocation.hpp"
#include "bandalloc/numerics.hpp"
#include "bandalloc/qos.hpp"

namespace bandalloc {

enum class Activation { ReLU, Tanh };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

/// Shared per-user FNN. Inputs are (w_min normalized, surplus normalized);
/// the output is one scalar embedding. The output layer is linear.
struct FnnArchitecture {
    std::vector<int> layer_sizes{2, 32, 64, 32, 1};
    Activation hidden = Activation::ReLU;

    void validate() const;
    std::size_t num_layers() const { return layer_sizes.size() - 1; }
    std::size_t parameter_count() const;
    bool operator==(const FnnArchitecture&) const = default;
};

/// Parameters stored as one flat vector: for each layer, the weight matrix
/// (row-major, out x in) followed by the bias vector.
class GnnParams {
public:
    GnnParams() = default;
    explicit GnnParams(FnnArchitecture arch);  // all zeros

    const FnnArchitecture& arch() const { return arch_; }
    std::size_t size() const { return data_.size(); }
    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }

    std::span<double> weights(std::size_t layer);
    std::span<const double> weights(std::size_t layer) const;
    std::span<double> bias(std::size_t layer);
    std::span<const double> bias(std::size_t layer) const;

    /// this += alpha * other (shapes must match).
    void add_scaled(const GnnParams& other, double alpha);
    bool all_finite() const;
    bool operator==(const GnnParams&) const = default;

private:
    FnnArchitecture arch_;
    std::vector<double> data_;
    std::vector<std::size_t> offsets_;  // start of layer l's weights
};

/// Glorot-uniform weights, zero biases.
GnnParams init_params(const FnnArchitecture& arch, const RngStream& stream);

struct ForwardTrace {
    std::size_t users = 0;
    /// Per layer l (0 = input): activations, users x layer_sizes[l].
    std::vector<std::vector<double>> activations;
    /// Per layer l >= 1: pre-activations, users x layer_sizes[l].
    std::vector<std::vector<double>> pre_activations;
    std::vector<double> logits;  // x
    std::vector<double> y;       // softmax(x)
    std::vector<double> w_tilde;
    double surplus = 0.0;
    std::uint64_t multiplies = 0;
};

/// Message passing, softmax aggregation and readout for one schedule.
/// Throws DomainError for an empty schedule.
ForwardTrace forward(const GnnParams& params, const ScheduleResult& sched);

/// Reverse-mode gradient of a scalar loss L(w_tilde) given dL/dw_tilde.
/// The gradient is accumulated as grad += scale * dL/dtheta.
void backward(const GnnParams& params, const ForwardTrace& trace,
              std::span<const double> dloss_dw_tilde, GnnParams& grad, double scale = 1.0);

/// Sum of rewards at w = w_tilde * W for one scheduled sample. When `grad` is
/// non-null the gradient of that sum (times `scale`) is accumulated into it.
double sample_objective(const GnnParams& params, const ScheduleResult& sched,
                        const RewardModel& model, const ChannelSample& sample,
                        GnnParams* grad = nullptr, double scale = 1.0);

/// GNN allocation in Hz with per-user rewards (budget enforced exactly).
Allocation gnn_allocate(const GnnParams& params, const ScheduleResult& sched,
                        const RewardModel& model, const ChannelSample& sample,
                        OpCounters* counters = nullptr);

/// Checkpoint JSON: {"layer_sizes": [...], "activation": "relu",
///                   "layers": [{"w": [...], "b": [...]}, ...]}
/// Numbers are written with 17 significant digits.
std::string save_params(const GnnParams& params);
/// Throws ParseError on malformed text and ValidationError on bad shapes.
GnnParams load_params(std::string_view document);

}  // namespace bandalloc
