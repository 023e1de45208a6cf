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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bff/acoustics.hpp"
#include "bff/tracks.hpp"

// Scoring of localization/tracking output against ground-truth bubble events:
// radius-gated one-to-one matching, precision/recall/error, and pair-based
// tracking metrics with a distance-weighted Jaccard index remapped to [-1, 1].
// Also hosts the baseline localizer/tracker and the track renderers so a
// dataset can be scored end to end without external tooling.
namespace bff::eval {

struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Localization {
    int frame = 0;
    std::int64_t loc_id = 0;
    Vec3 pos;
};

/// (frame, loc_id) -> track id. A localization belongs to at most one track.
struct TrackAssignment {
    std::map<std::pair<int, std::int64_t>, std::int64_t> track_of;

    void set(int frame, std::int64_t loc_id, std::int64_t track_id) {
        track_of[{frame, loc_id}] = track_id;
    }
    std::optional<std::int64_t> get(int frame, std::int64_t loc_id) const {
        const auto it = track_of.find({frame, loc_id});
        if (it == track_of.end())
            return std::nullopt;
        return it->second;
    }
    bool empty() const { return track_of.empty(); }
};

/// One accepted ground-truth <-> localization pair.
struct Match {
    int frame = 0;
    int bubble_id = 0;
    std::int64_t loc_id = 0;
    double distance = 0.0;
};

struct MatchResult {
    double radius = 0.0;
    std::vector<Match> tp;                            // sorted (frame, bubble)
    std::vector<std::pair<int, int>> fn;              // (frame, bubble_id)
    std::vector<std::pair<int, std::int64_t>> fp;     // (frame, loc_id)
};

struct LocalizationMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double mean_loc_error = 0.0;  // sum of matched distances / count
    double rmse_strict = 0.0;     // sqrt(mean squared matched distance)
    std::size_t tp = 0, fp = 0, fn = 0;
    bool precision_defined = false;
    bool recall_defined = false;
    bool error_defined = false;
};

/// A link between consecutive frames. For ground-truth pairs (tp/fn) `id` is
/// the bubble id and `distance` the ground-truth travel; for predicted-only
/// pairs (fp) `id` is the track id and `distance` the predicted travel.
struct TrackPair {
    int frame = 0;  // first frame of the (frame, frame+1) link
    std::int64_t id = 0;
    double distance = 0.0;
};

struct TrackingPairs {
    std::vector<TrackPair> tp, fn, fp;
};

struct TrackingMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double j = 0.0;      // tp_d / (tp_d + fp_d + fn_d)
    double j_map = 0.0;  // (tp_d - fp_d - fn_d) / (tp_d + fp_d + fn_d)
    double tp_d = 0.0, fp_d = 0.0, fn_d = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0;
    bool precision_defined = false;
    bool recall_defined = false;
    bool j_defined = false;
};

struct EvalReport {
    double radius = 0.0;
    LocalizationMetrics loc;
    TrackingMetrics trk;
    struct FrameRow {
        int frame = 0;
        std::size_t tp = 0, fp = 0, fn = 0;
        double mean_loc_error = 0.0;
    };
    std::vector<FrameRow> frames;
};

/// Radius-gated one-to-one matching per frame: candidate pairs sorted by
/// ascending distance (ties by bubble id then loc id) and accepted greedily.
/// Throws on radius <= 0 or duplicate (frame, loc_id) / (frame, bubble_id).
MatchResult match_localizations(const tracks::EventTable& gt,
                                const std::vector<Localization>& pred,
                                double radius);

LocalizationMetrics localization_metrics(const MatchResult& m);

/// Links between consecutive frames, restricted to matched localizations: a
/// ground-truth pair exists when the same bubble is matched in frame f and
/// f+1; it counts as tp when one track covers both of its localizations.
/// Predicted pairs over matched localizations that span two different bubbles
/// count as fp.
TrackingPairs tracking_pairs(const tracks::EventTable& gt,
                             const std::vector<Localization>& pred,
                             const MatchResult& m, const TrackAssignment& assign);

TrackingMetrics tracking_metrics(const TrackingPairs& pairs);

EvalReport evaluate(const tracks::EventTable& gt,
                    const std::vector<Localization>& pred,
                    const TrackAssignment& assign, double radius);

std::string report_json(const EvalReport& r);

/// Baseline localizer: strict regional maxima of the envelope above
/// `threshold_db` (relative to peak), refined by a 3x3 intensity-weighted
/// centroid; maxima closer than `min_sep` collapse into the strongest one.
std::vector<Localization> reference_localizer(const acoustics::BModeImage& image,
                                              double threshold_db,
                                              double min_sep, int frame = 0);

/// Baseline tracker: mutual nearest neighbours between consecutive frames,
/// gated at `max_link`; everything unlinked starts a new track.
TrackAssignment reference_tracker(const std::vector<Localization>& locs,
                                  double max_link);

/// Accumulated interpolated track points per pixel (plain hit counts).
std::vector<double> render_sr_image(const std::vector<Localization>& locs,
                                    const TrackAssignment& assign,
                                    const acoustics::ImageGrid& grid);

/// Mean link speed per pixel (m/s); zero where no track passes. Link speed is
/// travel distance times frame rate over the frame gap.
std::vector<double> render_velocity_map(const std::vector<Localization>& locs,
                                        const TrackAssignment& assign,
                                        double frame_rate,
                                        const acoustics::ImageGrid& grid);

/// CSV `frame,loc_id,x,y,z[,track_id]`; the column is present when `assign`
/// is non-null (missing assignments write -1).
void write_predictions_csv(const std::filesystem::path& path,
                           const std::vector<Localization>& locs,
                           const TrackAssignment* assign = nullptr);
std::pair<std::vector<Localization>, TrackAssignment> read_predictions_csv(
    const std::filesystem::path& path);

}  // namespace bff::eval
