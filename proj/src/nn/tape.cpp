// Copyright Contributors to the duosplat project
// SPDX-License-Identifier: Apache-2.0

#include "duosplat/nn/tape.hpp"

namespace duosplat::nn {

Parameter &ParameterSet::add(std::string name, Tensor init, bool decay) {
    if (index_.count(name)) {
        throw InvalidInput("parameter '" + name + "' registered twice");
    }
    Parameter p;
    p.name = name;
    p.grad = Tensor::Zero(init.rows(), init.cols());
    p.value = std::move(init);
    p.decay = decay;
    index_.emplace(std::move(name), params_.size());
    params_.push_back(std::move(p));
    return params_.back();
}

Parameter &ParameterSet::at(std::string_view name) {
    auto it = index_.find(name);
    if (it == index_.end()) {
        throw InvalidInput("unknown parameter '" + std::string(name) + "'");
    }
    return params_[it->second];
}

const Parameter &ParameterSet::at(std::string_view name) const {
    return const_cast<ParameterSet *>(this)->at(name);
}

bool ParameterSet::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::vector<Parameter *> ParameterSet::all() {
    std::vector<Parameter *> out;
    for (Parameter &p : params_) {
        out.push_back(&p);
    }
    return out;
}

std::vector<const Parameter *> ParameterSet::all() const {
    std::vector<const Parameter *> out;
    for (const Parameter &p : params_) {
        out.push_back(&p);
    }
    return out;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const Parameter &p : params_) {
        n += static_cast<std::size_t>(p.value.size());
    }
    return n;
}

void ParameterSet::zero_grad() {
    for (Parameter &p : params_) {
        p.grad.setZero(p.value.rows(), p.value.cols());
    }
}

void ParameterSet::set_trainable(bool trainable) {
    for (Parameter &p : params_) {
        p.trainable = trainable;
    }
}

const Tensor &Var::value() const { return tape_->value(id_); }
int Var::height() const { return tape_->height(id_); }
int Var::width() const { return tape_->width(id_); }
bool Var::requires_grad() const { return tape_->needs_grad(id_); }

Var Tape::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Tape::leaf(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = grad_enabled_;
    return push(std::move(n));
}

Var Tape::param(Parameter &p) {
    Node n;
    n.value = p.value;
    n.needs_grad = grad_enabled_ && p.trainable;
    n.param = n.needs_grad ? &p : nullptr;
    return push(std::move(n));
}

void Tape::set_spatial(Var v, int height, int width) {
    Node &n = nodes_[static_cast<std::size_t>(v.id())];
    if (static_cast<long>(height) * width != n.value.cols()) {
        throw InvalidInput("set_spatial: height*width does not match the column count");
    }
    n.height = height;
    n.width = width;
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var> &inputs, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    for (const Var &in : inputs) {
        if (in.tape() != this) {
            throw InvalidInput("tape: op inputs belong to a different tape");
        }
        n.needs_grad = n.needs_grad || needs_grad(in.id());
    }
    if (n.needs_grad) {
        n.backward = std::move(backward);
    }
    return push(std::move(n));
}

Tensor &Tape::grad_ref(int id) {
    Node &n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
        n.grad = Tensor::Zero(n.value.rows(), n.value.cols());
        n.has_grad = true;
    }
    return n.grad;
}

const Tensor *Tape::grad(Var v) const {
    const Node &n = nodes_[static_cast<std::size_t>(v.id())];
    return n.has_grad ? &n.grad : nullptr;
}

void Tape::backward(const std::vector<std::pair<Var, Tensor>> &seeds) {
    if (backward_done_) {
        throw InvalidInput("tape: backward already ran");
    }
    backward_done_ = true;
    for (const auto &[v, seed] : seeds) {
        if (v.tape() != this) {
            throw InvalidInput("tape: seed belongs to a different tape");
        }
        const Tensor &val = value(v.id());
        if (seed.rows() != val.rows() || seed.cols() != val.cols()) {
            throw InvalidInput("tape: seed gradient shape mismatch");
        }
        if (needs_grad(v.id())) {
            grad_ref(v.id()) += seed;
        }
    }
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        Node &n = nodes_[i];
        if (!n.has_grad) {
            continue;
        }
        if (n.backward) {
            n.backward(*this, static_cast<int>(i));
            n.backward = nullptr;
        }
        if (n.param) {
            n.param->grad += n.grad;
        }
    }
}

} // namespace duosplat::nn
