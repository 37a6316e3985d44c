#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mhdshred/error.hpp"
#include "mhdshred/keyvalue.hpp"
#include "mhdshred/mhdsim/params.hpp"

namespace mhdshred::dataset {

using mhdsim::MagneticDrive;

enum class Split { Train, Validation, Test };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Validation: return "val";
        case Split::Test: return "test";
    }
    return "?";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Validation;
    if (s == "test") return Split::Test;
    throw ConfigurationError("unknown split '" + s + "'");
}

/// One drive-parameter setting of a campaign.
struct CaseSpec {
    std::string label;
    MagneticDrive drive;
};

/// Train, validation and test settings of one campaign.
struct SplitSpec {
    std::string campaign;
    std::vector<CaseSpec> train;
    std::vector<CaseSpec> val;
    std::vector<CaseSpec> test;

    const std::vector<CaseSpec>& cases(Split s) const { return s == Split::Train ? train : s == Split::Validation ? val : test; }

    /// Throws ConfigurationError on empty train/test lists, duplicate labels or
    /// any drive setting that appears in more than one place.
    void validate() const;
};

inline bool same_setting(const MagneticDrive& a, const MagneticDrive& b) {
    return a.kind == b.kind && a.Bx == b.Bx && a.By == b.By && a.A == b.A && a.omega == b.omega && a.phi == b.phi &&
           a.C == b.C;
}

inline void SplitSpec::validate() const {
    if (train.empty()) throw ConfigurationError("split '" + campaign + "' has no training cases");
    if (test.empty()) throw ConfigurationError("split '" + campaign + "' has no test cases");
    std::vector<std::pair<Split, const CaseSpec*>> all;
    for (Split s : {Split::Train, Split::Validation, Split::Test})
        for (const auto& c : cases(s)) {
            c.drive.validate();
            for (const auto& [other_split, other] : all) {
                if (other->label == c.label) throw ConfigurationError("duplicate case label '" + c.label + "'");
                if (same_setting(other->drive, c.drive))
                    throw ConfigurationError("case '" + c.label + "' (" + to_string(s) + ") overlaps '" + other->label +
                                             "' (" + to_string(other_split) + ")");
            }
            all.emplace_back(s, &c);
        }
}

inline SplitSpec toroidal_preset() {
    SplitSpec s{"toroidal", {}, {}, {}};
    auto add = [](std::vector<CaseSpec>& v, double bx) {
        v.push_back({"Bx" + format_double(bx), MagneticDrive::toroidal(bx)});
    };
    for (double b : {0.5, 0.7, 0.9, 1.1, 1.3, 1.6, 2.0}) add(s.train, b);
    for (double b : {1.0, 1.7}) add(s.val, b);
    for (double b : {0.75, 1.85, 2.5}) add(s.test, b);
    return s;
}

inline SplitSpec combined_preset() {
    SplitSpec s{"combined", {}, {}, {}};
    auto add = [](std::vector<CaseSpec>& v, double bx, double by) {
        v.push_back({"Bx" + format_double(bx) + "_By" + format_double(by), MagneticDrive::combined(bx, by)});
    };
    add(s.train, 1.0, 0.2);
    add(s.train, 1.4, 0.35);
    add(s.train, 1.8, 0.55);
    add(s.train, 2.0, 0.7);
    add(s.val, 1.2, 0.3);
    add(s.test, 1.6, 0.45);
    return s;
}

inline SplitSpec oscillating_preset() {
    using std::numbers::pi;
    SplitSpec s{"oscillating", {}, {}, {}};
    auto add = [](std::vector<CaseSpec>& v, std::string label, double a, double period, double phi, double c) {
        v.push_back({std::move(label), MagneticDrive::sinusoidal(a, 2.0 * pi / period, phi, c)});
    };
    add(s.train, "train1", 0.5, 1.4, -0.05 + pi / 2, 1.3);
    add(s.train, "train2", 0.45, 1.5, 1.0 + pi / 2, 1.2);
    add(s.train, "train3", 0.42, 0.7, pi / 2 + 3.0, 1.3);
    add(s.train, "train4", 0.48, 1.1, pi / 2 + 1.3, 1.1);
    add(s.train, "train5", 0.6, 1.0, -1.0, 1.25);
    add(s.train, "train6", 0.7, 1.1, -1.0, 1.1);
    add(s.train, "train7", 0.45, 0.8, -0.11, 1.25);
    add(s.train, "train8", 0.45, 1.4, -0.11, 1.25);
    add(s.train, "train9", 0.45, 1.75, -0.11, 1.25);
    add(s.val, "val1", 0.6, 2.0, pi / 2, 1.1);
    add(s.val, "val2", 0.55, 1.4, pi / 2 + 1.0 / 5.0, 1.2);
    add(s.val, "val3", 0.45, 1.0, -0.11, 1.25);
    add(s.val, "val4", 0.45, 1.5, -0.11, 1.25);
    add(s.test, "testA", 0.5, 0.8, pi / 2, 1.2);
    add(s.test, "testB", 0.45, 1.25, -0.11, 1.25);
    add(s.test, "testC", 0.4, 1.4, -0.8, 1.25);
    return s;
}

inline SplitSpec preset(const std::string& name) {
    if (name == "toroidal") return toroidal_preset();
    if (name == "combined") return combined_preset();
    if (name == "oscillating") return oscillating_preset();
    throw ConfigurationError("unknown preset '" + name + "' (expected toroidal, combined or oscillating)");
}

inline std::vector<std::string> preset_names() { return {"toroidal", "combined", "oscillating"}; }

}  // namespace mhdshred::dataset
