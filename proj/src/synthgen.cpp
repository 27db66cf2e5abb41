#include "streamtal/synthgen.hpp"

#include "csv.hpp"
#include "streamtal/error.hpp"
#include "streamtal/rng.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace streamtal {

void SyntheticSpec::validate() const {
    auto bad_range = [](const IntRange& r) { return r.lo < 1 || r.hi < r.lo; };
    if (classes < 2) throw ConfigError("synthetic spec needs at least two classes");
    if (dim < 1 || videos_per_class < 1) throw ConfigError("synthetic spec: dim and videos_per_class must be >= 1");
    if (bad_range(instances_per_video) || bad_range(action_length) || bad_range(background_length)) {
        throw ConfigError("synthetic spec: ranges must be nonempty and positive");
    }
    if (!(noise_sigma > 0.0)) throw ConfigError("synthetic spec: noise_sigma must be positive");
}

namespace {

constexpr double kMaxPrototypeCosine = 0.3;
constexpr int kPrototypeAttempts = 10000;

Matrix draw_prototypes(int count, int dim, Rng& rng) {
    Matrix protos(count, dim);
    for (int p = 0; p < count; ++p) {
        bool accepted = false;
        for (int attempt = 0; attempt < kPrototypeAttempts && !accepted; ++attempt) {
            RowVector v(dim);
            for (int d = 0; d < dim; ++d) v[d] = rng.normal();
            const double n = v.norm();
            if (!(n > 0.0)) continue;
            v /= n;
            accepted = true;
            for (int q = 0; q < p && accepted; ++q) accepted = protos.row(q).dot(v) < kMaxPrototypeCosine;
            if (accepted) protos.row(p) = v;
        }
        if (!accepted) {
            throw ConfigError("could not place " + std::to_string(count) + " prototypes with cosine < 0.3 in " +
                              std::to_string(dim) + " dimensions");
        }
    }
    return protos;
}

int draw(const IntRange& r, Rng& rng) { return static_cast<int>(rng.uniform_int(r.lo, r.hi)); }

}  // namespace

SyntheticDataset generate_dataset(const SyntheticSpec& spec, std::uint64_t split) {
    spec.validate();
    SyntheticDataset ds;
    Rng proto_rng(derive_seed(spec.seed, 0));
    ds.prototypes = draw_prototypes(spec.classes + 1, spec.dim, proto_rng);
    const int background = spec.classes;

    const std::uint64_t split_seed = derive_seed(spec.seed, split + 1);
    const int total = spec.classes * spec.videos_per_class;
    for (int v = 0; v < total; ++v) {
        Rng rng(derive_seed(split_seed, static_cast<std::uint64_t>(v)));
        SyntheticVideo video;
        video.index = v;
        video.label = v / spec.videos_per_class;

        // Layout: background, then (action, background) per instance.
        const int instances = draw(spec.instances_per_video, rng);
        std::vector<std::pair<int, int>> runs;  // (prototype row, length)
        runs.emplace_back(background, draw(spec.background_length, rng));
        for (int i = 0; i < instances; ++i) {
            runs.emplace_back(video.label, draw(spec.action_length, rng));
            runs.emplace_back(background, draw(spec.background_length, rng));
        }
        const int length = std::accumulate(runs.begin(), runs.end(), 0,
                                           [](int acc, const auto& r) { return acc + r.second; });
        video.features.resize(length, spec.dim);
        int t = 0;
        for (const auto& [proto, len] : runs) {
            if (proto != background) video.gt.push_back({t, t + len, video.label});
            for (int k = 0; k < len; ++k, ++t) {
                for (int d = 0; d < spec.dim; ++d) {
                    video.features(t, d) = ds.prototypes(proto, d) + spec.noise_sigma * rng.normal();
                }
            }
        }
        quantize_to_storage(video.features);
        ds.videos.push_back(std::move(video));
    }
    return ds;
}

std::string CombinationOrder::name() const {
    switch (kind) {
        case Kind::Random: return "random:" + std::to_string(seed);
        case Kind::PairedSameClass: return "paired:" + std::to_string(seed);
        case Kind::Sequential: return "sequential";
    }
    return "?";
}

CombinationOrder parse_order(const std::string& text) {
    if (text == "sequential") return CombinationOrder::sequential();
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    std::uint64_t seed = 0;
    if (colon != std::string::npos) {
        try {
            seed = std::stoull(text.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad combination order seed in '" + text + "'");
        }
    }
    if (kind == "random") return CombinationOrder::random(seed);
    if (kind == "paired") return CombinationOrder::paired(seed);
    throw ConfigError("unknown combination order '" + text + "' (expected random:<seed>, paired:<seed>, sequential)");
}

std::vector<int> combination_sequence(std::span<const SyntheticVideo> videos, const CombinationOrder& order) {
    std::vector<int> seq(videos.size());
    std::iota(seq.begin(), seq.end(), 0);
    Rng rng(order.seed);
    switch (order.kind) {
        case CombinationOrder::Kind::Random:
            rng.shuffle(seq);
            break;
        case CombinationOrder::Kind::Sequential:
            std::stable_sort(seq.begin(), seq.end(),
                             [&](int a, int b) { return videos[a].label < videos[b].label; });
            break;
        case CombinationOrder::Kind::PairedSameClass: {
            // Pair same-class videos; an odd one out becomes a unit of its own.
            std::map<int, std::vector<int>> by_class;
            for (int i : seq) by_class[videos[i].label].push_back(i);
            std::vector<std::vector<int>> units;
            for (auto& [label, members] : by_class) {
                rng.shuffle(members);
                for (std::size_t k = 0; k < members.size(); k += 2) {
                    if (k + 1 < members.size()) {
                        units.push_back({members[k], members[k + 1]});
                    } else {
                        units.push_back({members[k]});
                    }
                }
            }
            rng.shuffle(units);
            seq.clear();
            for (const auto& u : units) seq.insert(seq.end(), u.begin(), u.end());
            break;
        }
    }
    return seq;
}

CombinedStream combine_stream(std::span<const SyntheticVideo> videos, const CombinationOrder& order) {
    if (videos.empty()) throw ValidationError("combine_stream: no videos");
    const auto seq = combination_sequence(videos, order);
    int total = 0;
    for (const auto& v : videos) total += v.length();

    CombinedStream cs;
    cs.stream.features.resize(total, videos.front().features.cols());
    cs.stream.source_tag = "synthetic/" + order.name();
    int offset = 0;
    for (int i : seq) {
        const auto& v = videos[i];
        cs.stream.features.middleRows(offset, v.length()) = v.features;
        for (const auto& g : v.gt) cs.gt.push_back({g.start_clip + offset, g.end_clip + offset, g.label});
        cs.videos.push_back({v.index, offset, offset + v.length(), v.label});
        offset += v.length();
    }
    return cs;
}

bool has_adjacent_same_class(std::span<const VideoSpan> videos) {
    for (std::size_t i = 1; i < videos.size(); ++i) {
        if (videos[i].label == videos[i - 1].label) return true;
    }
    return false;
}

int oracle_label(int clip, std::span<const GtInterval> gt) {
    if (gt.empty()) throw ValidationError("oracle_label: no ground-truth intervals");
    int best = -1;
    int best_dist = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const auto& g = gt[i];
        if (clip >= g.start_clip && clip < g.end_clip) return g.label;
        const int dist = clip < g.start_clip ? g.start_clip - clip : clip - g.end_clip;
        if (best < 0 || dist < best_dist) {
            best = static_cast<int>(i);
            best_dist = dist;
        }
    }
    return gt[static_cast<std::size_t>(best)].label;
}

std::span<const GtInterval> video_ground_truth(const CombinedStream& combined, int clip) {
    for (const auto& v : combined.videos) {
        if (clip < v.start_clip || clip >= v.end_clip) continue;
        const auto first = std::find_if(combined.gt.begin(), combined.gt.end(),
                                        [&](const GtInterval& g) { return g.start_clip >= v.start_clip; });
        auto last = first;
        while (last != combined.gt.end() && last->end_clip <= v.end_clip) ++last;
        return {first, last};
    }
    throw ValidationError("clip " + std::to_string(clip) + " lies outside every video");
}

void write_boundaries(const std::filesystem::path& path, std::span<const VideoSpan> videos) {
    auto out = detail::open_for_write(path);
    out << "video_index,start_clip,end_clip,class\n";
    for (const auto& v : videos) out << v.video_index << ',' << v.start_clip << ',' << v.end_clip << ',' << v.label << '\n';
}

std::vector<VideoSpan> load_boundaries(const std::filesystem::path& path) {
    detail::CsvReader reader(path, "video_index,start_clip,end_clip,class");
    std::vector<VideoSpan> out;
    std::vector<std::string> f;
    while (reader.next(f)) {
        reader.expect_fields(f, 4);
        out.push_back({reader.to_int(f[0]), reader.to_int(f[1]), reader.to_int(f[2]), reader.to_int(f[3])});
    }
    return out;
}

}  // namespace streamtal
