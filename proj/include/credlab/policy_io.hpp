// Checkpoint format: JSON dump of every logit table, the update counter, and
// the reference state. Doubles round-trip exactly, so save/load is value-
// preserving bit for bit.
#pragma once

#include <fstream>
#include <string>
#include <utility>

#include <json.hpp>

#include "credlab/common.hpp"
#include "credlab/policy.hpp"

namespace credlab {

struct Checkpoint {
    PolicyParams params;
    ReferenceState ref;
};

inline nlohmann::json checkpoint_to_json(const Checkpoint& c) {
    nlohmann::json j;
    j["format"] = "credlab-checkpoint-v1";
    j["num_inputs"] = c.params.num_inputs;
    j["vocab_size"] = c.params.vocab_size;
    j["horizon"] = c.params.horizon;
    j["num_feedback"] = c.params.num_feedback;
    j["version"] = c.params.version;
    j["student_logits"] = c.params.student_logits;
    if (!c.params.teacher_logits.empty()) j["teacher_logits"] = c.params.teacher_logits;
    j["decay_rate"] = c.ref.decay_rate;
    j["ema_student"] = c.ref.ema_student;
    if (!c.ref.ema_teacher.empty()) j["ema_teacher"] = c.ref.ema_teacher;
    return j;
}

inline std::string checkpoint_to_string(const Checkpoint& c) {
    return checkpoint_to_json(c).dump(2) + "\n";
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open for writing: " + path);
    f << checkpoint_to_string(c);
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ParseError("checkpoint: top level must be an object");
    static const char* known[] = {"format",         "num_inputs", "vocab_size",  "horizon",
                                  "num_feedback",   "version",    "student_logits",
                                  "teacher_logits", "decay_rate", "ema_student", "ema_teacher"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ParseError("checkpoint: unknown key '" + it.key() + "'");
    }
    try {
        if (j.at("format").get<std::string>() != "credlab-checkpoint-v1")
            throw ParseError("checkpoint: unsupported format tag");
        Checkpoint c;
        c.params.num_inputs = j.at("num_inputs").get<int>();
        c.params.vocab_size = j.at("vocab_size").get<int>();
        c.params.horizon = j.at("horizon").get<int>();
        c.params.num_feedback = j.at("num_feedback").get<int>();
        c.params.version = j.at("version").get<std::int64_t>();
        c.params.student_logits = j.at("student_logits").get<std::vector<double>>();
        if (j.contains("teacher_logits"))
            c.params.teacher_logits = j.at("teacher_logits").get<std::vector<double>>();
        c.ref.num_inputs = c.params.num_inputs;
        c.ref.vocab_size = c.params.vocab_size;
        c.ref.horizon = c.params.horizon;
        c.ref.num_feedback = c.params.num_feedback;
        c.ref.decay_rate = j.at("decay_rate").get<double>();
        c.ref.ema_student = j.at("ema_student").get<std::vector<double>>();
        if (j.contains("ema_teacher"))
            c.ref.ema_teacher = j.at("ema_teacher").get<std::vector<double>>();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: ") + e.what());
    }
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint '" + path + "': " + e.what());
    }
    return checkpoint_from_json(j);
}

}  // namespace credlab
