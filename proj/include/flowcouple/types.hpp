#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace flowcouple {

// One sample per row: B x D. D=2 for the moons task, D=1 for the bimodal demo.
using PointBatch = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;

enum class ConditionMode { None, Binary, Continuous };
enum class CouplingMethod { Independent, OT, C2OT };

const char* to_string(ConditionMode m);
const char* to_string(CouplingMethod m);
ConditionMode condition_mode_from_string(const std::string& s);
CouplingMethod coupling_method_from_string(const std::string& s);

// Per-sample conditions: none, discrete class labels, or continuous scalars.
// Discrete labels carry the -1/+1 network encoding for k=2; continuous scalars
// carry a (c, 1) lift used by the cosine condition cost.
class ConditionBatch {
public:
    ConditionBatch() = default;

    static ConditionBatch none(Eigen::Index n) {
        ConditionBatch c;
        c.mode_ = ConditionMode::None;
        c.size_ = n;
        return c;
    }

    static ConditionBatch discrete(IntVector labels, int num_classes) {
        if (num_classes < 1) throw std::invalid_argument("ConditionBatch: num_classes must be >= 1");
        for (Eigen::Index i = 0; i < labels.size(); ++i) {
            if (labels[i] < 0 || labels[i] >= num_classes)
                throw std::invalid_argument("ConditionBatch: label out of range");
        }
        ConditionBatch c;
        c.mode_ = ConditionMode::Binary;
        c.size_ = labels.size();
        c.labels_ = std::move(labels);
        c.num_classes_ = num_classes;
        return c;
    }

    static ConditionBatch continuous(Vector scalars) {
        ConditionBatch c;
        c.mode_ = ConditionMode::Continuous;
        c.size_ = scalars.size();
        c.scalars_ = std::move(scalars);
        return c;
    }

    ConditionMode mode() const { return mode_; }
    Eigen::Index size() const { return size_; }

    const IntVector& labels() const {
        require(ConditionMode::Binary);
        return labels_;
    }
    int num_classes() const {
        require(ConditionMode::Binary);
        return num_classes_;
    }
    const Vector& scalars() const {
        require(ConditionMode::Continuous);
        return scalars_;
    }

    // Scalar fed to the velocity net: -1/+1 for two-class labels, the raw
    // scalar for continuous conditions.
    Vector encoded() const {
        switch (mode_) {
            case ConditionMode::None:
                throw std::logic_error("ConditionBatch: no encoding for mode=none");
            case ConditionMode::Binary: {
                if (num_classes_ != 2)
                    throw std::logic_error("ConditionBatch: +-1 encoding is defined for 2 classes");
                Vector v(size_);
                for (Eigen::Index i = 0; i < size_; ++i) v[i] = labels_[i] == 0 ? -1.0 : 1.0;
                return v;
            }
            case ConditionMode::Continuous:
                return scalars_;
        }
        throw std::logic_error("ConditionBatch: bad mode");
    }

    // (c, 1) lift of continuous scalars, rows are condition vectors for the
    // cosine cost. Raw 1-d scalars have a degenerate cosine distance; the lift
    // makes it vary smoothly with the scalar.
    Eigen::MatrixXd lifted() const {
        require(ConditionMode::Continuous);
        Eigen::MatrixXd m(size_, 2);
        m.col(0) = scalars_;
        m.col(1).setOnes();
        return m;
    }

    // gather: out[i] = this[idx[i]]
    ConditionBatch select(const std::vector<int>& idx) const {
        switch (mode_) {
            case ConditionMode::None:
                return none(static_cast<Eigen::Index>(idx.size()));
            case ConditionMode::Binary: {
                IntVector l(static_cast<Eigen::Index>(idx.size()));
                for (size_t i = 0; i < idx.size(); ++i) l[static_cast<Eigen::Index>(i)] = labels_[idx[i]];
                return discrete(std::move(l), num_classes_);
            }
            case ConditionMode::Continuous: {
                Vector s(static_cast<Eigen::Index>(idx.size()));
                for (size_t i = 0; i < idx.size(); ++i) s[static_cast<Eigen::Index>(i)] = scalars_[idx[i]];
                return continuous(std::move(s));
            }
        }
        throw std::logic_error("ConditionBatch: bad mode");
    }

    ConditionBatch segment(Eigen::Index start, Eigen::Index len) const {
        switch (mode_) {
            case ConditionMode::None:
                return none(len);
            case ConditionMode::Binary:
                return discrete(labels_.segment(start, len), num_classes_);
            case ConditionMode::Continuous:
                return continuous(scalars_.segment(start, len));
        }
        throw std::logic_error("ConditionBatch: bad mode");
    }

    bool operator==(const ConditionBatch& o) const {
        if (mode_ != o.mode_ || size_ != o.size_) return false;
        if (mode_ == ConditionMode::Binary) return num_classes_ == o.num_classes_ && labels_ == o.labels_;
        if (mode_ == ConditionMode::Continuous) return scalars_ == o.scalars_;
        return true;
    }

private:
    void require(ConditionMode m) const {
        if (mode_ != m) throw std::logic_error("ConditionBatch: wrong mode for accessor");
    }

    ConditionMode mode_ = ConditionMode::None;
    Eigen::Index size_ = 0;
    IntVector labels_;
    int num_classes_ = 0;
    Vector scalars_;
};

// Aligned (x0[i], x1[i], cond[i]) triples ready for loss computation.
struct CoupledBatch {
    PointBatch x0;
    PointBatch x1;
    ConditionBatch cond;
    CouplingMethod method = CouplingMethod::Independent;

    Eigen::Index size() const { return x0.rows(); }
    Eigen::Index dim() const { return x0.cols(); }

    CoupledBatch segment(Eigen::Index start, Eigen::Index len) const {
        CoupledBatch out;
        out.x0 = x0.middleRows(start, len);
        out.x1 = x1.middleRows(start, len);
        out.cond = cond.segment(start, len);
        out.method = method;
        return out;
    }
};

}  // namespace flowcouple
