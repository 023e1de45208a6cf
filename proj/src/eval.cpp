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

#include "bff/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "bff/toml.hpp"

namespace bff::eval {

namespace {

double dist3(const Vec3& a, const Vec3& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

MatchResult match_localizations(const tracks::EventTable& gt,
                                const std::vector<Localization>& pred,
                                double radius) {
    if (!(radius > 0.0))
        throw EvalError("search radius must be positive");

    std::map<int, std::vector<const tracks::Event*>> gt_by_frame;
    std::set<std::pair<int, int>> gt_ids;
    for (const tracks::Event& e : gt) {
        if (!gt_ids.insert({e.frame, e.bubble_id}).second)
            throw EvalError("duplicate ground-truth bubble " +
                            std::to_string(e.bubble_id) + " in frame " +
                            std::to_string(e.frame));
        gt_by_frame[e.frame].push_back(&e);
    }
    std::map<int, std::vector<const Localization*>> pred_by_frame;
    std::set<std::pair<int, std::int64_t>> loc_ids;
    for (const Localization& l : pred) {
        if (!loc_ids.insert({l.frame, l.loc_id}).second)
            throw EvalError("duplicate loc_id " + std::to_string(l.loc_id) +
                            " in frame " + std::to_string(l.frame));
        pred_by_frame[l.frame].push_back(&l);
    }

    MatchResult out;
    out.radius = radius;
    std::set<int> frames;
    for (const auto& [f, _] : gt_by_frame)
        frames.insert(f);
    for (const auto& [f, _] : pred_by_frame)
        frames.insert(f);

    struct Cand {
        double d;
        int bubble;
        std::int64_t loc;
    };
    for (int f : frames) {
        const auto git = gt_by_frame.find(f);
        const auto pit = pred_by_frame.find(f);
        std::vector<Cand> cands;
        if (git != gt_by_frame.end() && pit != pred_by_frame.end()) {
            for (const tracks::Event* e : git->second)
                for (const Localization* l : pit->second) {
                    const double d = dist3(e->pos, l->pos);
                    if (d <= radius)
                        cands.push_back({d, e->bubble_id, l->loc_id});
                }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.d != b.d)
                return a.d < b.d;
            if (a.bubble != b.bubble)
                return a.bubble < b.bubble;
            return a.loc < b.loc;
        });
        std::set<int> used_gt;
        std::set<std::int64_t> used_loc;
        for (const Cand& c : cands) {
            if (used_gt.count(c.bubble) || used_loc.count(c.loc))
                continue;
            used_gt.insert(c.bubble);
            used_loc.insert(c.loc);
            out.tp.push_back({f, c.bubble, c.loc, c.d});
        }
        if (git != gt_by_frame.end())
            for (const tracks::Event* e : git->second)
                if (!used_gt.count(e->bubble_id))
                    out.fn.push_back({f, e->bubble_id});
        if (pit != pred_by_frame.end())
            for (const Localization* l : pit->second)
                if (!used_loc.count(l->loc_id))
                    out.fp.push_back({f, l->loc_id});
    }
    auto by_pair = [](const auto& a, const auto& b) { return a < b; };
    std::sort(out.fn.begin(), out.fn.end(), by_pair);
    std::sort(out.fp.begin(), out.fp.end(), by_pair);
    std::sort(out.tp.begin(), out.tp.end(), [](const Match& a, const Match& b) {
        return a.frame != b.frame ? a.frame < b.frame : a.bubble_id < b.bubble_id;
    });
    return out;
}

LocalizationMetrics localization_metrics(const MatchResult& m) {
    LocalizationMetrics r;
    r.tp = m.tp.size();
    r.fp = m.fp.size();
    r.fn = m.fn.size();
    if (r.tp + r.fp > 0) {
        r.precision = static_cast<double>(r.tp) / (r.tp + r.fp);
        r.precision_defined = true;
    }
    if (r.tp + r.fn > 0) {
        r.recall = static_cast<double>(r.tp) / (r.tp + r.fn);
        r.recall_defined = true;
    }
    if (r.tp > 0) {
        double sum = 0, sq = 0;
        for (const Match& t : m.tp) {
            sum += t.distance;
            sq += t.distance * t.distance;
        }
        r.mean_loc_error = sum / r.tp;
        r.rmse_strict = std::sqrt(sq / r.tp);
        r.error_defined = true;
    }
    return r;
}

TrackingPairs tracking_pairs(const tracks::EventTable& gt,
                             const std::vector<Localization>& pred,
                             const MatchResult& m,
                             const TrackAssignment& assign) {
    std::map<std::pair<int, int>, const Match*> by_bubble;      // (frame, bubble)
    std::map<std::pair<int, std::int64_t>, int> bubble_of_loc;  // (frame, loc)
    for (const Match& t : m.tp) {
        by_bubble[{t.frame, t.bubble_id}] = &t;
        bubble_of_loc[{t.frame, t.loc_id}] = t.bubble_id;
    }
    std::map<std::pair<int, int>, Vec3> gt_pos;
    for (const tracks::Event& e : gt)
        gt_pos[{e.frame, e.bubble_id}] = e.pos;
    std::map<std::pair<int, std::int64_t>, Vec3> loc_pos;
    for (const Localization& l : pred)
        loc_pos[{l.frame, l.loc_id}] = l.pos;

    TrackingPairs out;

    // ground-truth links between matched localizations of the same bubble
    for (const Match& t : m.tp) {
        const auto next = by_bubble.find({t.frame + 1, t.bubble_id});
        if (next == by_bubble.end())
            continue;
        const double d = dist3(gt_pos.at({t.frame, t.bubble_id}),
                               gt_pos.at({t.frame + 1, t.bubble_id}));
        const auto t0 = assign.get(t.frame, t.loc_id);
        const auto t1 = assign.get(t.frame + 1, next->second->loc_id);
        if (t0 && t1 && *t0 == *t1)
            out.tp.push_back({t.frame, t.bubble_id, d});
        else
            out.fn.push_back({t.frame, t.bubble_id, d});
    }

    // predicted links over matched localizations, keyed (track, frame)
    std::map<std::pair<std::int64_t, int>, std::int64_t> track_loc;
    for (const auto& [key, track] : assign.track_of) {
        const auto& [frame, loc] = key;
        if (!bubble_of_loc.count({frame, loc}))
            continue;  // only matched localizations form pairs
        if (!track_loc.emplace(std::pair{track, frame}, loc).second)
            throw EvalError("track " + std::to_string(track) +
                            " holds two localizations in frame " +
                            std::to_string(frame));
    }
    for (const auto& [key, loc0] : track_loc) {
        const auto& [track, frame] = key;
        const auto next = track_loc.find({track, frame + 1});
        if (next == track_loc.end())
            continue;
        const int b0 = bubble_of_loc.at({frame, loc0});
        const int b1 = bubble_of_loc.at({frame + 1, next->second});
        if (b0 == b1)
            continue;  // correct link, already counted from the gt side
        const double d = dist3(loc_pos.at({frame, loc0}),
                               loc_pos.at({frame + 1, next->second}));
        out.fp.push_back({frame, track, d});
    }
    return out;
}

TrackingMetrics tracking_metrics(const TrackingPairs& pairs) {
    TrackingMetrics r;
    r.tp = pairs.tp.size();
    r.fp = pairs.fp.size();
    r.fn = pairs.fn.size();
    for (const TrackPair& p : pairs.tp)
        r.tp_d += p.distance;
    for (const TrackPair& p : pairs.fp)
        r.fp_d += p.distance;
    for (const TrackPair& p : pairs.fn)
        r.fn_d += p.distance;
    if (r.tp + r.fp > 0) {
        r.precision = static_cast<double>(r.tp) / (r.tp + r.fp);
        r.precision_defined = true;
    }
    if (r.tp + r.fn > 0) {
        r.recall = static_cast<double>(r.tp) / (r.tp + r.fn);
        r.recall_defined = true;
    }
    const double denom = r.tp_d + r.fp_d + r.fn_d;
    if (denom > 0.0) {
        r.j = r.tp_d / denom;
        r.j_map = (r.tp_d - r.fp_d - r.fn_d) / denom;
        r.j_defined = true;
    }
    return r;
}

EvalReport evaluate(const tracks::EventTable& gt,
                    const std::vector<Localization>& pred,
                    const TrackAssignment& assign, double radius) {
    EvalReport rep;
    rep.radius = radius;
    const MatchResult m = match_localizations(gt, pred, radius);
    rep.loc = localization_metrics(m);
    rep.trk = tracking_metrics(tracking_pairs(gt, pred, m, assign));

    std::map<int, EvalReport::FrameRow> rows;
    std::map<int, double> dist_sum;
    for (const Match& t : m.tp) {
        rows[t.frame].tp++;
        dist_sum[t.frame] += t.distance;
    }
    for (const auto& [f, _] : m.fn)
        rows[f].fn++;
    for (const auto& [f, _] : m.fp)
        rows[f].fp++;
    for (auto& [f, row] : rows) {
        row.frame = f;
        if (row.tp > 0)
            row.mean_loc_error = dist_sum[f] / row.tp;
        rep.frames.push_back(row);
    }
    return rep;
}

std::string report_json(const EvalReport& r) {
    nlohmann::json j;
    j["radius"] = r.radius;
    j["localization"] = {
        {"precision", r.loc.precision},
        {"recall", r.loc.recall},
        {"mean_loc_error", r.loc.mean_loc_error},
        {"rmse_strict", r.loc.rmse_strict},
        {"tp", r.loc.tp},
        {"fp", r.loc.fp},
        {"fn", r.loc.fn},
        {"precision_defined", r.loc.precision_defined},
        {"recall_defined", r.loc.recall_defined},
        {"error_defined", r.loc.error_defined},
    };
    j["tracking"] = {
        {"precision", r.trk.precision},
        {"recall", r.trk.recall},
        {"j", r.trk.j},
        {"j_map", r.trk.j_map},
        {"tp_d", r.trk.tp_d},
        {"fp_d", r.trk.fp_d},
        {"fn_d", r.trk.fn_d},
        {"tp", r.trk.tp},
        {"fp", r.trk.fp},
        {"fn", r.trk.fn},
        {"precision_defined", r.trk.precision_defined},
        {"recall_defined", r.trk.recall_defined},
        {"j_defined", r.trk.j_defined},
    };
    j["frames"] = nlohmann::json::array();
    for (const auto& row : r.frames)
        j["frames"].push_back({{"frame", row.frame},
                               {"tp", row.tp},
                               {"fp", row.fp},
                               {"fn", row.fn},
                               {"mean_loc_error", row.mean_loc_error}});
    return j.dump(2);
}

std::vector<Localization> reference_localizer(const acoustics::BModeImage& image,
                                              double threshold_db,
                                              double min_sep, int frame) {
    const acoustics::ImageGrid& g = image.grid;
    if (image.envelope.size() != g.size())
        throw EvalError("image does not match its grid");
    struct Peak {
        double value;
        int ix, iz;
        Vec3 pos;
    };
    std::vector<Peak> peaks;
    auto env = [&](int ix, int iz) {
        return image.envelope[static_cast<std::size_t>(iz) * g.nx + ix];
    };
    for (int iz = 1; iz + 1 < g.nz; ++iz)
        for (int ix = 1; ix + 1 < g.nx; ++ix) {
            const double v = env(ix, iz);
            if (image.db[static_cast<std::size_t>(iz) * g.nx + ix] <=
                threshold_db)
                continue;
            bool is_max = true;
            for (int dz = -1; dz <= 1 && is_max; ++dz)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dz == 0)
                        continue;
                    if (env(ix + dx, iz + dz) >= v) {
                        is_max = false;
                        break;
                    }
                }
            if (!is_max)
                continue;
            double wsum = 0, xsum = 0, zsum = 0;
            for (int dz = -1; dz <= 1; ++dz)
                for (int dx = -1; dx <= 1; ++dx) {
                    const double w = env(ix + dx, iz + dz);
                    wsum += w;
                    xsum += w * (g.x0 + (ix + dx) * g.dx);
                    zsum += w * (g.z0 + (iz + dz) * g.dz);
                }
            peaks.push_back({v, ix, iz, {xsum / wsum, 0.0, zsum / wsum}});
        }

    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
        if (a.value != b.value)
            return a.value > b.value;
        return a.iz != b.iz ? a.iz < b.iz : a.ix < b.ix;
    });
    std::vector<Localization> out;
    for (const Peak& p : peaks) {
        bool keep = true;
        for (const Localization& kept : out)
            if (dist3(kept.pos, p.pos) < min_sep) {
                keep = false;
                break;
            }
        if (keep)
            out.push_back({frame, static_cast<std::int64_t>(out.size()), p.pos});
    }
    return out;
}

TrackAssignment reference_tracker(const std::vector<Localization>& locs,
                                  double max_link) {
    std::map<int, std::vector<const Localization*>> by_frame;
    for (const Localization& l : locs)
        by_frame[l.frame].push_back(&l);
    for (auto& [f, v] : by_frame)
        std::sort(v.begin(), v.end(),
                  [](const Localization* a, const Localization* b) {
                      return a->loc_id < b->loc_id;
                  });

    // lists are id-sorted, so "first strictly closer" breaks ties by loc_id
    auto nearest = [&](const Vec3& p,
                       const std::vector<const Localization*>& cands) {
        const Localization* best = nullptr;
        double bd = max_link;
        for (const Localization* c : cands) {
            const double d = dist3(p, c->pos);
            if (d < bd) {
                bd = d;
                best = c;
            }
        }
        return best;
    };

    TrackAssignment assign;
    std::int64_t next_track = 0;
    std::map<std::int64_t, std::int64_t> carry;  // loc_id in prev frame -> track
    const std::vector<const Localization*>* prev = nullptr;
    int prev_frame = 0;

    for (const auto& [f, cur] : by_frame) {
        std::map<std::int64_t, std::int64_t> now;
        const bool consecutive = prev && f == prev_frame + 1;
        for (const Localization* l : cur) {
            std::int64_t track = -1;
            if (consecutive) {
                const Localization* best = nearest(l->pos, *prev);
                if (best && nearest(best->pos, cur) == l)
                    track = carry.at(best->loc_id);
            }
            if (track < 0)
                track = next_track++;
            assign.set(f, l->loc_id, track);
            now[l->loc_id] = track;
        }
        carry = std::move(now);
        prev_frame = f;
        prev = &cur;
    }
    return assign;
}

namespace {

// walk a segment in half-pixel steps, invoking fn at each sample point
template <typename Fn>
void sample_segment(const Vec3& a, const Vec3& b, const acoustics::ImageGrid& g,
                    Fn&& fn) {
    const double step = 0.5 * std::min(g.dx, g.dz);
    const double len = dist3(a, b);
    const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
    for (int i = 1; i <= n; ++i) {
        const double f = static_cast<double>(i) / n;
        fn(Vec3{a.x + f * (b.x - a.x), a.y + f * (b.y - a.y),
                a.z + f * (b.z - a.z)});
    }
}

struct PixelLookup {
    const acoustics::ImageGrid& g;
    bool index(const Vec3& p, std::size_t& out) const {
        const auto ix = static_cast<long>(std::lround((p.x - g.x0) / g.dx));
        const auto iz = static_cast<long>(std::lround((p.z - g.z0) / g.dz));
        if (ix < 0 || iz < 0 || ix >= g.nx || iz >= g.nz)
            return false;
        out = static_cast<std::size_t>(iz) * g.nx + ix;
        return true;
    }
};

// track_id -> localizations in frame order
std::map<std::int64_t, std::vector<const Localization*>> build_tracks(
    const std::vector<Localization>& locs, const TrackAssignment& assign) {
    std::map<std::int64_t, std::vector<const Localization*>> tracks;
    for (const Localization& l : locs) {
        const auto t = assign.get(l.frame, l.loc_id);
        if (t)
            tracks[*t].push_back(&l);
    }
    for (auto& [t, v] : tracks)
        std::sort(v.begin(), v.end(),
                  [](const Localization* a, const Localization* b) {
                      return a->frame < b->frame;
                  });
    return tracks;
}

}  // namespace

std::vector<double> render_sr_image(const std::vector<Localization>& locs,
                                    const TrackAssignment& assign,
                                    const acoustics::ImageGrid& grid) {
    grid.validate();
    std::vector<double> img(grid.size(), 0.0);
    const PixelLookup px{grid};
    auto hit = [&](const Vec3& p) {
        std::size_t i;
        if (px.index(p, i))
            img[i] += 1.0;
    };

    const auto tracks = build_tracks(locs, assign);
    for (const auto& [t, pts] : tracks) {
        hit(pts[0]->pos);
        for (std::size_t i = 1; i < pts.size(); ++i)
            sample_segment(pts[i - 1]->pos, pts[i]->pos, grid, hit);
    }
    // localizations outside any track still contribute their own point
    for (const Localization& l : locs)
        if (!assign.get(l.frame, l.loc_id))
            hit(l.pos);
    return img;
}

std::vector<double> render_velocity_map(const std::vector<Localization>& locs,
                                        const TrackAssignment& assign,
                                        double frame_rate,
                                        const acoustics::ImageGrid& grid) {
    grid.validate();
    if (!(frame_rate > 0.0))
        throw EvalError("frame rate must be positive");
    std::vector<double> sum(grid.size(), 0.0), count(grid.size(), 0.0);
    const PixelLookup px{grid};

    const auto tracks = build_tracks(locs, assign);
    for (const auto& [t, pts] : tracks)
        for (std::size_t i = 1; i < pts.size(); ++i) {
            const int gap = pts[i]->frame - pts[i - 1]->frame;
            if (gap <= 0)
                continue;
            const double speed =
                dist3(pts[i - 1]->pos, pts[i]->pos) * frame_rate / gap;
            auto hit = [&](const Vec3& p) {
                std::size_t k;
                if (px.index(p, k)) {
                    sum[k] += speed;
                    count[k] += 1.0;
                }
            };
            hit(pts[i - 1]->pos);
            sample_segment(pts[i - 1]->pos, pts[i]->pos, grid, hit);
        }
    for (std::size_t i = 0; i < sum.size(); ++i)
        sum[i] = count[i] > 0 ? sum[i] / count[i] : 0.0;
    return sum;
}

void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<Localization>& locs,
                           const TrackAssignment* assign) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw EvalError("cannot write '" + path.string() + "'");
    std::vector<const Localization*> sorted;
    for (const Localization& l : locs)
        sorted.push_back(&l);
    std::sort(sorted.begin(), sorted.end(),
              [](const Localization* a, const Localization* b) {
                  return a->frame != b->frame ? a->frame < b->frame
                                              : a->loc_id < b->loc_id;
              });
    out << (assign ? "frame,loc_id,x,y,z,track_id\n" : "frame,loc_id,x,y,z\n");
    for (const Localization* l : sorted) {
        out << l->frame << ',' << l->loc_id << ','
            << toml::format_double(l->pos.x) << ','
            << toml::format_double(l->pos.y) << ','
            << toml::format_double(l->pos.z);
        if (assign) {
            const auto t = assign->get(l->frame, l->loc_id);
            out << ',' << (t ? *t : -1);
        }
        out << '\n';
    }
}

std::pair<std::vector<Localization>, TrackAssignment> read_predictions_csv(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw EvalError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line))
        throw EvalError("empty prediction file '" + path.string() + "'");
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::stringstream ss(s);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        return cells;
    };
    const auto header = split(line);
    const bool tracked = header.size() == 6 && header[5] == "track_id";
    if (!tracked && header.size() != 5)
        throw EvalError("bad prediction header '" + line + "'");

    std::vector<Localization> locs;
    TrackAssignment assign;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw EvalError("bad prediction row '" + line + "'");
        Localization l;
        l.frame = std::stoi(cells[0]);
        l.loc_id = std::stoll(cells[1]);
        l.pos = {toml::parse_double(cells[2]), toml::parse_double(cells[3]),
                 toml::parse_double(cells[4])};
        locs.push_back(l);
        if (tracked) {
            const std::int64_t t = std::stoll(cells[5]);
            if (t >= 0)
                assign.set(l.frame, l.loc_id, t);
        }
    }
    return {std::move(locs), std::move(assign)};
}

}  // namespace bff::eval
