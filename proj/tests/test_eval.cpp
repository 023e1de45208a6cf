// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <set>
#include <vector>

#include "bff/eval.hpp"
#include "bff/rng.hpp"
#include "doctest.h"

using namespace bff;
using eval::Localization;
using eval::TrackAssignment;

namespace {

tracks::Event gt_at(int frame, int bubble, double x, double y = 0,
                    double z = 0) {
    tracks::Event e;
    e.frame = frame;
    e.bubble_id = bubble;
    e.pos = {x, y, z};
    return e;
}

Localization loc_at(int frame, std::int64_t id, double x, double y = 0,
                    double z = 0) {
    return {frame, id, {x, y, z}};
}

double d3(const Vec3& a, const Vec3& b) {
    return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                     (a.z - b.z) * (a.z - b.z));
}

// exhaustive assignment: maximize matched count, then minimize total distance
void brute(const std::vector<Vec3>& gt, const std::vector<Vec3>& loc,
           double radius, std::size_t gi, std::vector<bool>& used, int tp,
           double dist, int& best_tp, double& best_dist) {
    if (gi == gt.size()) {
        if (tp > best_tp || (tp == best_tp && dist < best_dist)) {
            best_tp = tp;
            best_dist = dist;
        }
        return;
    }
    brute(gt, loc, radius, gi + 1, used, tp, dist, best_tp, best_dist);
    for (std::size_t j = 0; j < loc.size(); ++j) {
        if (used[j])
            continue;
        const double d = d3(gt[gi], loc[j]);
        if (d > radius)
            continue;
        used[j] = true;
        brute(gt, loc, radius, gi + 1, used, tp + 1, dist + d, best_tp,
              best_dist);
        used[j] = false;
    }
}

}  // namespace

TEST_SUITE_BEGIN("eval");

TEST_CASE("identical predictions score perfectly") {
    tracks::EventTable gt;
    std::vector<Localization> pred;
    TrackAssignment assign;
    for (int f = 0; f < 3; ++f)
        for (int b = 0; b < 2; ++b) {
            gt.push_back(gt_at(f, b, 1e-3 * b + 1e-4 * f, 0, 5e-3));
            pred.push_back(loc_at(f, b, 1e-3 * b + 1e-4 * f, 0, 5e-3));
            assign.set(f, b, b);
        }
    const auto rep = eval::evaluate(gt, pred, assign, 1e-4);
    CHECK(rep.loc.precision == 1.0);
    CHECK(rep.loc.recall == 1.0);
    CHECK(rep.loc.mean_loc_error == 0.0);
    CHECK(rep.trk.precision == 1.0);
    CHECK(rep.trk.recall == 1.0);
    CHECK(rep.trk.j == 1.0);
    CHECK(rep.trk.j_map == 1.0);
    CHECK(rep.loc.tp == 6);
    CHECK(rep.trk.tp == 4);  // two bubbles over two frame boundaries

    const nlohmann::json j = nlohmann::json::parse(eval::report_json(rep));
    CHECK(j["localization"]["precision"] == 1.0);
    CHECK(j["localization"]["recall"] == 1.0);
    CHECK(j["localization"]["mean_loc_error"] == 0.0);
    CHECK(j["tracking"]["precision"] == 1.0);
    CHECK(j["tracking"]["recall"] == 1.0);
    CHECK(j["tracking"]["j_map"] == 1.0);
    CHECK(j["radius"] == 1e-4);
    CHECK(j["frames"].size() == 3);
}

TEST_CASE("nearest prediction wins and the rest are false positives") {
    const double r = 1e-4;
    const tracks::EventTable gt = {gt_at(0, 5, 0, 0, 0)};
    const std::vector<Localization> pred = {loc_at(0, 7, 0.5 * r),
                                            loc_at(0, 9, 0.8 * r)};
    const auto m = eval::match_localizations(gt, pred, r);
    REQUIRE(m.tp.size() == 1);
    CHECK(m.tp[0].bubble_id == 5);
    CHECK(m.tp[0].loc_id == 7);
    CHECK(m.tp[0].distance == doctest::Approx(0.5 * r).epsilon(1e-12));
    REQUIRE(m.fp.size() == 1);
    CHECK(m.fp[0].second == 9);
    CHECK(m.fn.empty());
}

TEST_CASE("the radius boundary is inclusive") {
    const double r = 1e-4;
    const tracks::EventTable gt = {gt_at(0, 0, 0)};
    const auto hit = eval::match_localizations(gt, {loc_at(0, 0, r)}, r);
    CHECK(hit.tp.size() == 1);
    const auto miss = eval::match_localizations(gt, {loc_at(0, 0, 1.01 * r)}, r);
    CHECK(miss.tp.empty());
    CHECK(miss.fn.size() == 1);
    CHECK(miss.fp.size() == 1);
}

TEST_CASE("frames never cross-match") {
    const tracks::EventTable gt = {gt_at(0, 0, 0)};
    const auto m = eval::match_localizations(gt, {loc_at(1, 0, 0)}, 1e-4);
    CHECK(m.tp.empty());
    CHECK(m.fn.size() == 1);
    CHECK(m.fp.size() == 1);
}

TEST_CASE("duplicate ids are rejected") {
    const tracks::EventTable gt = {gt_at(0, 0, 0)};
    CHECK_THROWS_AS((void)eval::match_localizations(
                        gt, {loc_at(0, 3, 0), loc_at(0, 3, 1e-5)}, 1e-4),
                    eval::EvalError);
    const tracks::EventTable bad_gt = {gt_at(0, 0, 0), gt_at(0, 0, 1e-5)};
    CHECK_THROWS_AS(
        (void)eval::match_localizations(bad_gt, {loc_at(0, 0, 0)}, 1e-4),
        eval::EvalError);
    // the same loc_id in different frames is fine
    CHECK_NOTHROW((void)eval::match_localizations(
        gt, {loc_at(0, 3, 0), loc_at(1, 3, 0)}, 1e-4));
    CHECK_THROWS_AS((void)eval::match_localizations(gt, {}, 0.0),
                    eval::EvalError);
}

TEST_CASE("metric arithmetic matches hand counts") {
    eval::MatchResult m;
    m.radius = 1.0;
    for (int i = 0; i < 74; ++i)
        m.tp.push_back({0, i, i, 0.0});
    for (int i = 0; i < 26; ++i)
        m.fp.push_back({0, 1000 + i});
    for (int i = 0; i < 38; ++i)
        m.fn.push_back({0, 2000 + i});
    const auto r = eval::localization_metrics(m);
    CHECK(r.precision == doctest::Approx(0.74).epsilon(1e-15));
    CHECK(r.recall == doctest::Approx(74.0 / 112.0).epsilon(1e-15));

    eval::MatchResult two;
    two.radius = 1.0;
    two.tp.push_back({0, 0, 0, 3e-6});
    two.tp.push_back({0, 1, 1, 4e-6});
    const auto e = eval::localization_metrics(two);
    CHECK(e.mean_loc_error == doctest::Approx(3.5e-6).epsilon(1e-12));
    CHECK(e.rmse_strict == doctest::Approx(std::sqrt(12.5) * 1e-6).epsilon(1e-12));
    CHECK(e.precision == 1.0);
    CHECK(e.recall == 1.0);
}

TEST_CASE("empty inputs are flagged rather than dividing by zero") {
    const auto r = eval::localization_metrics(eval::MatchResult{});
    CHECK(!r.precision_defined);
    CHECK(!r.recall_defined);
    CHECK(!r.error_defined);
    CHECK(r.precision == 0.0);
    CHECK(r.recall == 0.0);

    const auto t = eval::tracking_metrics(eval::TrackingPairs{});
    CHECK(!t.precision_defined);
    CHECK(!t.recall_defined);
    CHECK(!t.j_defined);
    CHECK(t.j == 0.0);
    CHECK(t.j_map == 0.0);
}

TEST_CASE("a broken track link halves the weighted jaccard") {
    // bubble 1 travels 2 m and stays on one track; bubble 2 travels 2 m but
    // its track id changes at the boundary
    tracks::EventTable gt = {gt_at(0, 1, 0), gt_at(1, 1, 2.0), gt_at(0, 2, 10.0),
                             gt_at(1, 2, 12.0)};
    std::vector<Localization> pred = {loc_at(0, 0, 0), loc_at(1, 0, 2.0),
                                      loc_at(0, 1, 10.0), loc_at(1, 1, 12.0)};
    TrackAssignment assign;
    assign.set(0, 0, 100);
    assign.set(1, 0, 100);
    assign.set(0, 1, 200);
    assign.set(1, 1, 201);
    const auto m = eval::match_localizations(gt, pred, 0.5);
    const auto pairs = eval::tracking_pairs(gt, pred, m, assign);
    CHECK(pairs.tp.size() == 1);
    CHECK(pairs.fn.size() == 1);
    CHECK(pairs.fp.empty());
    const auto tm = eval::tracking_metrics(pairs);
    CHECK(tm.tp_d == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(tm.fn_d == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(tm.fp_d == 0.0);
    CHECK(tm.j == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(tm.j_map == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("swapped track ids produce only false pairs") {
    tracks::EventTable gt = {gt_at(0, 1, 0), gt_at(1, 1, 0.1),
                             gt_at(0, 2, 1.0), gt_at(1, 2, 1.1)};
    std::vector<Localization> pred = {loc_at(0, 10, 0), loc_at(1, 10, 1.1),
                                      loc_at(0, 20, 1.0), loc_at(1, 20, 0.1)};
    // tracks follow loc ids straight across, so each one swaps bubbles
    TrackAssignment assign;
    assign.set(0, 10, 0);
    assign.set(1, 10, 0);
    assign.set(0, 20, 1);
    assign.set(1, 20, 1);
    const auto m = eval::match_localizations(gt, pred, 0.01);
    CHECK(m.tp.size() == 4);
    const auto pairs = eval::tracking_pairs(gt, pred, m, assign);
    CHECK(pairs.tp.empty());
    CHECK(pairs.fn.size() == 2);
    CHECK(pairs.fp.size() == 2);
    CHECK(eval::tracking_metrics(pairs).j_map == -1.0);
}

TEST_CASE("a bubble unlocalized in one frame forms no pair at all") {
    tracks::EventTable gt = {gt_at(0, 1, 0), gt_at(1, 1, 0.1),
                             gt_at(2, 1, 0.2)};
    // frame 1 missing: no (0,1) or (1,2) pair may exist
    std::vector<Localization> pred = {loc_at(0, 0, 0), loc_at(2, 0, 0.2)};
    TrackAssignment assign;
    assign.set(0, 0, 0);
    assign.set(2, 0, 0);
    const auto m = eval::match_localizations(gt, pred, 0.01);
    CHECK(m.tp.size() == 2);
    CHECK(m.fn.size() == 1);
    const auto pairs = eval::tracking_pairs(gt, pred, m, assign);
    CHECK(pairs.tp.empty());
    CHECK(pairs.fn.empty());
    CHECK(pairs.fp.empty());
}

TEST_CASE("j_map is exactly the remapped jaccard on random pair sets") {
    Rng rng(0x9a11);
    for (int trial = 0; trial < 1000; ++trial) {
        eval::TrackingPairs p;
        const auto n_tp = static_cast<int>(rng.uniform(0, 5));
        const auto n_fp = static_cast<int>(rng.uniform(0, 5));
        const auto n_fn = static_cast<int>(rng.uniform(0, 5));
        for (int i = 0; i < n_tp; ++i)
            p.tp.push_back({0, i, rng.uniform(1e-7, 1e-3)});
        for (int i = 0; i < n_fp; ++i)
            p.fp.push_back({0, i, rng.uniform(1e-7, 1e-3)});
        for (int i = 0; i < n_fn; ++i)
            p.fn.push_back({0, i, rng.uniform(1e-7, 1e-3)});
        const auto m = eval::tracking_metrics(p);
        if (m.j_defined) {
            CHECK(m.j >= 0.0);
            CHECK(m.j <= 1.0);
            CHECK(m.j_map >= -1.0);
            CHECK(m.j_map <= 1.0);
            CHECK(std::fabs(m.j_map - (2.0 * m.j - 1.0)) <= 1e-15);
        }
        if (m.precision_defined) {
            CHECK(m.precision >= 0.0);
            CHECK(m.precision <= 1.0);
        }
    }
}

TEST_CASE("matching is invariant under coordinate scaling") {
    Rng rng(0x5ca1e);
    for (int trial = 0; trial < 50; ++trial) {
        tracks::EventTable gt;
        std::vector<Localization> pred;
        const int ng = 1 + static_cast<int>(rng.uniform(0, 10));
        const int np = 1 + static_cast<int>(rng.uniform(0, 10));
        for (int i = 0; i < ng; ++i)
            gt.push_back(gt_at(0, i, rng.uniform01(), rng.uniform01(), 0));
        for (int i = 0; i < np; ++i)
            pred.push_back(loc_at(0, i, rng.uniform01(), rng.uniform01(), 0));
        const double radius = 0.2;
        const double alpha = 1e3;
        tracks::EventTable gt_s = gt;
        std::vector<Localization> pred_s = pred;
        for (auto& e : gt_s)
            e.pos = {e.pos.x * alpha, e.pos.y * alpha, e.pos.z * alpha};
        for (auto& l : pred_s)
            l.pos = {l.pos.x * alpha, l.pos.y * alpha, l.pos.z * alpha};

        const auto m = eval::match_localizations(gt, pred, radius);
        const auto ms = eval::match_localizations(gt_s, pred_s, radius * alpha);
        auto key = [](const eval::MatchResult& r) {
            std::set<std::pair<int, std::int64_t>> k;
            for (const auto& t : r.tp)
                k.insert({t.bubble_id, t.loc_id});
            return k;
        };
        CHECK(key(m) == key(ms));
        CHECK(m.fn == ms.fn);
        CHECK(m.fp == ms.fp);
    }
}

TEST_CASE("spurious additions never improve the scores") {
    Rng rng(0xadd);
    for (int trial = 0; trial < 50; ++trial) {
        tracks::EventTable gt;
        std::vector<Localization> pred;
        const int n = 1 + static_cast<int>(rng.uniform(0, 6));
        for (int i = 0; i < n; ++i) {
            gt.push_back(gt_at(0, i, rng.uniform01(), rng.uniform01(), 0));
            if (rng.uniform01() < 0.7)
                pred.push_back(
                    loc_at(0, i, rng.uniform01(), rng.uniform01(), 0));
        }
        const double radius = 0.3;
        const auto base = eval::localization_metrics(
            eval::match_localizations(gt, pred, radius));

        auto pred_fp = pred;
        pred_fp.push_back(loc_at(0, 999, 50.0 + trial, 50.0, 0));
        const auto worse_p = eval::localization_metrics(
            eval::match_localizations(gt, pred_fp, radius));
        CHECK(worse_p.precision <= base.precision + 1e-15);

        auto gt_fn = gt;
        gt_fn.push_back(gt_at(0, 999, -50.0 - trial, 50.0, 0));
        const auto worse_r = eval::localization_metrics(
            eval::match_localizations(gt_fn, pred, radius));
        CHECK(worse_r.recall <= base.recall + 1e-15);
    }
}

TEST_CASE("greedy matching tracks the exhaustive assignment oracle") {
    Rng rng(0x04ac1e);
    int deficits = 0;
    auto run = [&](double radius, int trials) {
        for (int trial = 0; trial < trials; ++trial) {
            const int ng = static_cast<int>(rng.uniform(0, 7));
            const int np = static_cast<int>(rng.uniform(0, 7));
            std::vector<Vec3> gp, lp;
            tracks::EventTable gt;
            std::vector<Localization> pred;
            for (int i = 0; i < ng; ++i) {
                gp.push_back({rng.uniform01(), rng.uniform01(), 0});
                gt.push_back(gt_at(0, i, gp.back().x, gp.back().y, 0));
            }
            for (int i = 0; i < np; ++i) {
                lp.push_back({rng.uniform01(), rng.uniform01(), 0});
                pred.push_back(loc_at(0, i, lp.back().x, lp.back().y, 0));
            }
            const auto m = eval::match_localizations(gt, pred, radius);
            double greedy_dist = 0;
            for (const auto& t : m.tp)
                greedy_dist += t.distance;

            int best_tp = -1;
            double best_dist = 0;
            std::vector<bool> used(lp.size(), false);
            brute(gp, lp, radius, 0, used, 0, 0.0, best_tp, best_dist);
            const int got = static_cast<int>(m.tp.size());
            if (radius >= M_SQRT2) {
                // every pair is admissible; greedy saturates like the optimum
                CHECK(got == std::min(ng, np));
                CHECK(got == best_tp);
            }
            CHECK(got <= best_tp);
            CHECK(2 * got >= best_tp);  // greedy is a maximal matching
            if (got == best_tp)
                CHECK(greedy_dist >= best_dist - 1e-12);
            else
                ++deficits;
        }
    };
    run(0.35, 300);  // sparse gate: a blocking pair occasionally costs one match
    run(2.00, 100);  // dense gate: exact agreement guaranteed
    MESSAGE("greedy fell short of the optimal pair count in ", deficits,
            " of 300 sparse instances");
    CHECK(deficits <= 15);
}

TEST_CASE("the baseline localizer finds isolated blobs") {
    acoustics::ImageGrid grid;
    grid.x0 = 0;
    grid.z0 = 0;
    grid.dx = grid.dz = 1e-4;
    grid.nx = 40;
    grid.nz = 30;
    auto blob_image = [&](const std::vector<std::pair<double, double>>& centers) {
        acoustics::BModeImage bm;
        bm.grid = grid;
        bm.dynamic_range = 60.0;
        bm.envelope.assign(grid.size(), 1e-6);
        for (int iz = 0; iz < grid.nz; ++iz)
            for (int ix = 0; ix < grid.nx; ++ix)
                for (const auto& [cx, cz] : centers) {
                    const double r2 = (ix - cx) * (ix - cx) + (iz - cz) * (iz - cz);
                    bm.envelope[static_cast<std::size_t>(iz) * grid.nx + ix] +=
                        std::exp(-r2 / (2.0 * 1.5 * 1.5));
                }
        bm.peak = *std::max_element(bm.envelope.begin(), bm.envelope.end());
        bm.db.resize(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i)
            bm.db[i] = std::max(20.0 * std::log10(bm.envelope[i] / bm.peak),
                                -bm.dynamic_range);
        return bm;
    };

    const auto two = blob_image({{10.3, 8.6}, {30.0, 20.0}});
    const auto locs = eval::reference_localizer(two, -30.0, 5e-4, 3);
    REQUIRE(locs.size() == 2);
    for (const auto& [cx, cz] : {std::pair{10.3, 8.6}, std::pair{30.0, 20.0}}) {
        const Vec3 want{cx * grid.dx, 0, cz * grid.dz};
        const double nearest = std::min(d3(locs[0].pos, want),
                                        d3(locs[1].pos, want));
        CHECK(nearest < 0.5 * grid.dx);
    }
    CHECK(locs[0].frame == 3);
    CHECK(locs[0].loc_id == 0);
    CHECK(locs[1].loc_id == 1);

    // flat image: nothing above threshold, no strict maxima
    acoustics::BModeImage flat;
    flat.grid = grid;
    flat.dynamic_range = 60.0;
    flat.envelope.assign(grid.size(), 0.0);
    flat.db.assign(grid.size(), -60.0);
    flat.peak = 0.0;
    CHECK(eval::reference_localizer(flat, -30.0, 5e-4).empty());

    // two resolvable maxima ~4 px apart: kept when min_sep allows, merged
    // into the stronger one when it does not
    const auto close = blob_image({{15.0, 15.0}, {19.0, 15.0}});
    CHECK(eval::reference_localizer(close, -30.0, 3e-4).size() == 2);
    CHECK(eval::reference_localizer(close, -30.0, 5e-4).size() == 1);
}

TEST_CASE("the baseline tracker follows bubbles and respects its gate") {
    const double max_link = 2e-4;
    std::vector<Localization> locs;
    for (int f = 0; f < 10; ++f)
        locs.push_back(loc_at(f, 0, f * 1e-4));
    auto a = eval::reference_tracker(locs, max_link);
    std::set<std::int64_t> ids;
    for (const auto& [k, t] : a.track_of)
        ids.insert(t);
    CHECK(ids.size() == 1);

    // a jump beyond the gate splits the track
    locs[5].pos.x += 10e-4;
    for (int f = 6; f < 10; ++f)
        locs[f].pos.x += 10e-4;
    a = eval::reference_tracker(locs, max_link);
    ids.clear();
    for (const auto& [k, t] : a.track_of)
        ids.insert(t);
    CHECK(ids.size() == 2);

    // parallel distant bubbles stay disjoint
    std::vector<Localization> two;
    for (int f = 0; f < 5; ++f) {
        two.push_back(loc_at(f, 0, f * 1e-4, 0, 0));
        two.push_back(loc_at(f, 1, f * 1e-4, 0, 1e-2));
    }
    a = eval::reference_tracker(two, max_link);
    ids.clear();
    for (const auto& [k, t] : a.track_of)
        ids.insert(t);
    CHECK(ids.size() == 2);
    CHECK(a.get(0, 0).value() == a.get(4, 0).value());
    CHECK(a.get(0, 1).value() == a.get(4, 1).value());

    // non-mutual nearest neighbours do not link
    std::vector<Localization> amb = {loc_at(0, 0, 0),
                                     loc_at(1, 0, 1.5e-4),   // closer to nothing
                                     loc_at(1, 1, 0.5e-4)};  // mutual with f0
    a = eval::reference_tracker(amb, max_link);
    CHECK(a.get(1, 1).value() == a.get(0, 0).value());
    CHECK(a.get(1, 0).value() != a.get(0, 0).value());
}

TEST_CASE("renders paint constant-speed tracks at their speed") {
    acoustics::ImageGrid grid;
    grid.x0 = 0;
    grid.z0 = 0;
    grid.dx = grid.dz = 1e-4;
    grid.nx = grid.nz = 20;
    std::vector<Localization> locs = {loc_at(0, 0, 2e-4, 0, 5e-4),
                                      loc_at(1, 0, 18e-4, 0, 5e-4)};
    TrackAssignment assign;
    assign.set(0, 0, 0);
    assign.set(1, 0, 0);
    const double frame_rate = 100.0;
    const double speed = 1.6e-3 * frame_rate;

    const auto vel = eval::render_velocity_map(locs, assign, frame_rate, grid);
    const auto sr = eval::render_sr_image(locs, assign, grid);
    for (int ix = 0; ix < grid.nx; ++ix)
        for (int iz = 0; iz < grid.nz; ++iz) {
            const double v = vel[static_cast<std::size_t>(iz) * grid.nx + ix];
            const double s = sr[static_cast<std::size_t>(iz) * grid.nx + ix];
            if (iz == 5 && ix >= 2 && ix <= 18) {
                CHECK(v == doctest::Approx(speed).epsilon(1e-12));
                CHECK(s > 0.0);
            } else {
                CHECK(v == 0.0);
                CHECK(s == 0.0);
            }
        }

    CHECK(eval::render_sr_image({}, {}, grid) ==
          std::vector<double>(grid.size(), 0.0));
    CHECK(eval::render_velocity_map({}, {}, frame_rate, grid) ==
          std::vector<double>(grid.size(), 0.0));

    // an unassigned localization still lands one dot in the SR image
    const auto dot = eval::render_sr_image({loc_at(0, 0, 5e-4, 0, 5e-4)}, {},
                                           grid);
    CHECK(std::accumulate(dot.begin(), dot.end(), 0.0) == 1.0);
}

TEST_CASE("prediction files round-trip") {
    const auto path =
        std::filesystem::temp_directory_path() / "bff_test_pred.csv";
    std::vector<Localization> locs = {loc_at(0, 0, 1e-3, 2e-3, 3e-3),
                                      loc_at(0, 1, -1e-3, 0, 4e-3),
                                      loc_at(1, 0, 1.1e-3, 2e-3, 3e-3)};
    TrackAssignment assign;
    assign.set(0, 0, 5);
    assign.set(1, 0, 5);  // loc (0,1) stays unassigned

    eval::write_predictions_csv(path, locs, &assign);
    const auto [rl, ra] = eval::read_predictions_csv(path);
    REQUIRE(rl.size() == 3);
    CHECK(rl[0].pos.x == 1e-3);
    CHECK(rl[1].pos.x == -1e-3);
    CHECK(ra.get(0, 0).value() == 5);
    CHECK(ra.get(1, 0).value() == 5);
    CHECK(!ra.get(0, 1).has_value());

    eval::write_predictions_csv(path, locs, nullptr);
    const auto [ru, ua] = eval::read_predictions_csv(path);
    CHECK(ru.size() == 3);
    CHECK(ua.empty());

    {
        std::ofstream bad(path);
        bad << "frame,loc_id,x\n0,0,1\n";
    }
    CHECK_THROWS_AS((void)eval::read_predictions_csv(path), eval::EvalError);
    {
        std::ofstream bad(path);
        bad << "frame,loc_id,x,y,z\n0,0,1,2\n";
    }
    CHECK_THROWS_AS((void)eval::read_predictions_csv(path), eval::EvalError);
    std::filesystem::remove(path);
}

TEST_SUITE_END();
