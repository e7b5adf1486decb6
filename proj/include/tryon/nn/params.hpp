#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tryon/core/error.hpp"
#include "tryon/core/rng.hpp"

namespace tryon::nn {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// Named, ordered collection of parameter matrices. Bias vectors are 1xN.
/// Insertion order is the canonical order for checkpoints and reductions.
template <class T>
class ParamStore {
public:
    int add(std::string name, Eigen::Index rows, Eigen::Index cols) {
        require<ValueError>(!index_.contains(name), "duplicate parameter name ", name);
        const int id = static_cast<int>(values_.size());
        index_.emplace(name, id);
        names_.push_back(std::move(name));
        values_.push_back(Mat<T>::Zero(rows, cols));
        return id;
    }

    int size() const noexcept { return static_cast<int>(values_.size()); }
    Mat<T>& operator[](int id) { return values_[static_cast<std::size_t>(id)]; }
    const Mat<T>& operator[](int id) const { return values_[static_cast<std::size_t>(id)]; }
    const std::string& name(int id) const { return names_[static_cast<std::size_t>(id)]; }
    const std::vector<std::string>& names() const noexcept { return names_; }

    bool contains(const std::string& name) const { return index_.contains(name); }
    int id(const std::string& name) const {
        auto it = index_.find(name);
        require<ValueError>(it != index_.end(), "unknown parameter ", name);
        return it->second;
    }
    Mat<T>& operator[](const std::string& name) { return values_[static_cast<std::size_t>(id(name))]; }
    const Mat<T>& operator[](const std::string& name) const { return values_[static_cast<std::size_t>(id(name))]; }

    std::size_t count() const {
        std::size_t n = 0;
        for (const auto& m : values_) n += static_cast<std::size_t>(m.size());
        return n;
    }

    /// Same names and shapes, all zeros.
    ParamStore zeros_like() const {
        ParamStore z;
        for (int i = 0; i < size(); ++i) z.add(names_[i], values_[i].rows(), values_[i].cols());
        return z;
    }
    void set_zero() {
        for (auto& m : values_) m.setZero();
    }
    ParamStore& operator+=(const ParamStore& o) {
        for (int i = 0; i < size(); ++i) values_[i] += o.values_[i];
        return *this;
    }

    template <class U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (int i = 0; i < size(); ++i) {
            out.add(names_[i], values_[i].rows(), values_[i].cols());
            out[i] = values_[i].template cast<U>();
        }
        return out;
    }

    friend bool operator==(const ParamStore& a, const ParamStore& b) {
        if (a.names_ != b.names_) return false;
        for (int i = 0; i < a.size(); ++i) {
            if (a.values_[i].rows() != b.values_[i].rows() || a.values_[i].cols() != b.values_[i].cols())
                return false;
            if (a.values_[i] != b.values_[i]) return false;
        }
        return true;
    }

private:
    std::vector<std::string> names_;
    std::vector<Mat<T>> values_;
    std::unordered_map<std::string, int> index_;
};

template <class T>
void init_truncated_normal(Mat<T>& m, double stddev, Rng& rng) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(rng.truncated_normal(stddev));
}

}  // namespace tryon::nn
