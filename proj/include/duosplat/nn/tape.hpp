// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "duosplat/common.hpp"

#include <Eigen/Core>

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace duosplat::nn {

/// Dense row-major matrix used for every value and gradient. Token sets are stored as
/// (tokens x channels); feature maps as (channels x height*width).
using Tensor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;
    /// Decoupled weight decay applies (matrices and kernels, not biases or norm gains).
    bool decay = true;
};

/// Ordered, name-addressable collection of parameters. Element addresses are stable.
class ParameterSet {
  public:
    Parameter &add(std::string name, Tensor init, bool decay = true);
    Parameter &at(std::string_view name);
    const Parameter &at(std::string_view name) const;
    bool contains(std::string_view name) const;

    std::vector<Parameter *> all();
    std::vector<const Parameter *> all() const;
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    void zero_grad();
    void set_trainable(bool trainable);

  private:
    std::deque<Parameter> params_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
  public:
    Var() = default;

    const Tensor &value() const;
    long rows() const { return value().rows(); }
    long cols() const { return value().cols(); }
    /// Spatial layout of a (channels x height*width) feature map; 0 when not spatial.
    int height() const;
    int width() const;
    bool requires_grad() const;
    bool valid() const { return tape_ != nullptr; }
    Tape *tape() const { return tape_; }
    int id() const { return id_; }

  private:
    friend class Tape;
    Var(Tape *tape, int id) : tape_(tape), id_(id) {}

    Tape *tape_ = nullptr;
    int id_ = -1;
};

/// Reverse-mode recording of one forward pass. Nodes are appended in execution order, so
/// reverse order is a valid topological order for backpropagation.
class Tape {
  public:
    /// Called with the tape and the id of the node whose gradient is being propagated.
    using BackwardFn = std::function<void(Tape &, int self)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape &) = delete;
    Tape &operator=(const Tape &) = delete;

    bool grad_enabled() const { return grad_enabled_; }

    /// Value that never receives a gradient.
    Var constant(Tensor value);
    /// Value whose gradient is kept after backward (e.g. input images).
    Var leaf(Tensor value);
    /// Parameter read; its gradient is added into `p.grad` by backward.
    Var param(Parameter &p);

    void set_spatial(Var v, int height, int width);

    /// Accumulates d(sum_i <seed_i, v_i>)/d(.) through the tape. One call per tape.
    void backward(const std::vector<std::pair<Var, Tensor>> &seeds);
    void backward(Var v, const Tensor &seed) { backward({{v, seed}}); }

    /// Gradient of a node after backward; nullptr when none reached it.
    const Tensor *grad(Var v) const;

    // Op-builder interface.
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
    Var record(Tensor value, const std::vector<Var> &inputs, BackwardFn backward);
    const Tensor &value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    /// Gradient accumulator of a node, allocated as zeros on first use.
    Tensor &grad_ref(int id);
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    int height(int id) const { return nodes_[static_cast<std::size_t>(id)].height; }
    int width(int id) const { return nodes_[static_cast<std::size_t>(id)].width; }
    std::size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        bool has_grad = false;
        Parameter *param = nullptr;
        int height = 0;
        int width = 0;
        BackwardFn backward;
    };
    Var push(Node node);

    std::deque<Node> nodes_;
    bool grad_enabled_ = true;
    bool backward_done_ = false;
};

} // namespace duosplat::nn
