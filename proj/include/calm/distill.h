#pragma once

#include <map>
#include <string>
#include <vector>

#include "calm/common.h"
#include "calm/data.h"
#include "calm/model.h"

namespace calm {

// q = softmax(z / T)
template <typename T>
std::vector<T> soften(const std::vector<T>& z, T temperature) {
    if (!(temperature > T(0))) throw DataError("soften: temperature must be > 0");
    std::vector<T> scaled(z.size());
    for (size_t i = 0; i < z.size(); ++i) scaled[i] = z[i] / temperature;
    return softmax_vec(scaled);
}

// T^2 * KL(q_teacher || q_student), logs clamped at 1e-12.
template <typename T>
double kd_loss(const std::vector<T>& z_student, const std::vector<T>& z_teacher,
               T temperature) {
    auto qs = soften(z_student, temperature);
    auto qt = soften(z_teacher, temperature);
    double kl = 0.0;
    for (size_t c = 0; c < qs.size(); ++c) {
        double a = std::max(static_cast<double>(qt[c]), 1e-12);
        double b = std::max(static_cast<double>(qs[c]), 1e-12);
        kl += a * (std::log(a) - std::log(b));
    }
    return static_cast<double>(temperature) * static_cast<double>(temperature) * kl;
}

inline double combined_loss(double ce, double kd, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw DataError("combined_loss: alpha must lie in [0,1]");
    return (1.0 - alpha) * ce + alpha * kd;
}

// Frozen teacher logits keyed by document id.
struct TeacherCache {
    std::map<std::string, std::vector<float>> logits;

    const std::vector<float>& at(const std::string& doc_id) const {
        auto it = logits.find(doc_id);
        if (it == logits.end())
            throw DataError("teacher cache is missing document '" + doc_id + "'");
        return it->second;
    }

    void save(const std::string& path) const;  // CSV: doc_id,z0,z1
    static TeacherCache load(const std::string& path);
};

// Runs the frozen baseline teacher over every document once. Deterministic;
// parallel across documents.
TeacherCache cache_teacher(ModelParams<float>& teacher, const Corpus& corpus);

}  // namespace calm
