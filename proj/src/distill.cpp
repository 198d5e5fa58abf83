#include "calm/distill.h"

#include <exception>
#include <fstream>

#include "calm/csv.h"

namespace calm {

void TeacherCache::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write teacher cache: " + path);
    out << "doc_id,z0,z1\n";
    for (const auto& [id, z] : logits)
        out << csv_escape(id) << ',' << fmt_float(z[0]) << ',' << fmt_float(z[1]) << '\n';
}

TeacherCache TeacherCache::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open teacher cache: " + path);
    TeacherCache cache;
    std::string line;
    if (!std::getline(in, line) || line != "doc_id,z0,z1")
        throw DataError("teacher cache has unexpected header");
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = csv_split(line);
        if (fields.size() != 3)
            throw DataError("teacher cache line " + std::to_string(lineno) + ": need 3 fields");
        cache.logits[fields[0]] = {std::strtof(fields[1].c_str(), nullptr),
                                   std::strtof(fields[2].c_str(), nullptr)};
    }
    return cache;
}

TeacherCache cache_teacher(ModelParams<float>& teacher, const Corpus& corpus) {
    if (teacher.variant != Variant::baseline)
        throw DataError("teacher must be a baseline (concatenated) model");
    auto docs = encode_corpus(corpus, teacher.vocab, teacher.max_component_length);
    std::vector<std::vector<float>> rows(docs.size());
    std::exception_ptr err;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < static_cast<int>(docs.size()); ++i) {
        try {
            rows[i] = baseline_forward(teacher, docs[i]).breakdown.z;
        } catch (...) {
#pragma omp critical
            err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
    TeacherCache cache;
    for (size_t i = 0; i < docs.size(); ++i) cache.logits[docs[i].id] = rows[i];
    return cache;
}

}  // namespace calm
