#include "up2d/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace up2d {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

template <class E>
struct EnumNames {
    std::vector<std::pair<E, std::string>> names;

    E parse(const std::string& key, const std::string& v) const {
        for (const auto& [e, n] : names)
            if (n == v) return e;
        std::string options;
        for (const auto& [e, n] : names) options += (options.empty() ? "" : "|") + n;
        throw ConfigError("config: '" + key + "' expects one of " + options + ", got '" + v + "'");
    }
    std::string name(E e) const {
        for (const auto& [x, n] : names)
            if (x == e) return n;
        return "?";
    }
};

const EnumNames<RpfMode> kRpf{{{RpfMode::Refined, "on"}, {RpfMode::Standard, "standard"}, {RpfMode::Off, "off"}}};
const EnumNames<UgemaMode> kUgema{
    {{UgemaMode::On, "on"}, {UgemaMode::PlainEma, "plain_ema"}, {UgemaMode::Off, "off"}}};
const EnumNames<EntropyFilter> kEntropy{
    {{EntropyFilter::On, "on"}, {EntropyFilter::Full, "full"}, {EntropyFilter::Off, "off"}}};
const EnumNames<TeacherView> kView{{{TeacherView::Original, "original"}, {TeacherView::Weak, "weak"}}};
const EnumNames<UgemaMetric> kMetric{{{UgemaMetric::WeightedEntropy, "weighted_entropy"},
                                      {UgemaMetric::FullEntropy, "full_entropy"},
                                      {UgemaMetric::Loss, "loss"}}};
const EnumNames<EntropyForm> kForm{{{EntropyForm::Literal, "literal"}, {EntropyForm::Binary, "binary"}}};
const EnumNames<EntropyMedianMode> kEta2{{{EntropyMedianMode::MeanOfMedians, "mean_of_medians"},
                                          {EntropyMedianMode::UnionMedian, "union"},
                                          {EntropyMedianMode::PerRegion, "per_region"}}};
const EnumNames<RefinedDistanceSource> kDist{
    {{RefinedDistanceSource::Masked, "masked"}, {RefinedDistanceSource::Full, "full"}}};
const EnumNames<bool> kBool{{{true, "true"}, {false, "false"}}};

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

template <class T>
Field number(T RunConfig::*member) {
    return {[member](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return fmt(c.*member);
                else return std::to_string(c.*member);
            },
            [member](RunConfig& c, const std::string& k, const std::string& v) {
                if constexpr (std::is_floating_point_v<T>) c.*member = parse_double(k, v);
                else c.*member = static_cast<T>(parse_uint(k, v));
            }};
}

template <class E>
Field enumeration(E RunConfig::*member, const EnumNames<E>& names) {
    return {[member, &names](const RunConfig& c) { return names.name(c.*member); },
            [member, &names](RunConfig& c, const std::string& k, const std::string& v) {
                c.*member = names.parse(k, v);
            }};
}

Field style(double DomainStyle::*member) {
    return {[member](const RunConfig& c) { return fmt(c.target_style.*member); },
            [member](RunConfig& c, const std::string& k, const std::string& v) {
                c.target_style.*member = parse_double(k, v);
            }};
}

Field tint(std::size_t i) {
    return {[i](const RunConfig& c) { return fmt(c.target_style.hue_tint[i]); },
            [i](RunConfig& c, const std::string& k, const std::string& v) {
                c.target_style.hue_tint[i] = parse_double(k, v);
            }};
}

// Ordered so that to_text() groups related keys.
const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> f = {
        {"seed", number(&RunConfig::seed)},
        {"data_dir",
         {[](const RunConfig& c) { return c.data_dir; },
          [](RunConfig& c, const std::string&, const std::string& v) { c.data_dir = v; }}},
        {"image_size", number(&RunConfig::image_size)},
        {"n_source", number(&RunConfig::n_source)},
        {"n_source_val", number(&RunConfig::n_source_val)},
        {"n_target", number(&RunConfig::n_target)},
        {"n_target_test", number(&RunConfig::n_target_test)},
        {"target_brightness", style(&DomainStyle::brightness_shift)},
        {"target_contrast", style(&DomainStyle::contrast_gain)},
        {"target_blur", style(&DomainStyle::blur_sigma)},
        {"target_noise", style(&DomainStyle::noise_std)},
        {"target_tint_r", tint(0)},
        {"target_tint_g", tint(1)},
        {"target_tint_b", tint(2)},
        {"source_epochs", number(&RunConfig::source_epochs)},
        {"source_lr", number(&RunConfig::source_lr)},
        {"adapt_epochs", number(&RunConfig::adapt_epochs)},
        {"adapt_lr", number(&RunConfig::adapt_lr)},
        {"batch_size", number(&RunConfig::batch_size)},
        {"gamma", number(&RunConfig::gamma)},
        {"mc_passes", number(&RunConfig::mc_passes)},
        {"eta1", number(&RunConfig::eta1)},
        {"eta2_mode", enumeration(&RunConfig::eta2_mode, kEta2)},
        {"alpha", number(&RunConfig::alpha)},
        {"beta", number(&RunConfig::beta)},
        {"s", number(&RunConfig::scale_s)},
        {"weight_consistency", number(&RunConfig::weight_consistency)},
        {"weight_entropy", number(&RunConfig::weight_entropy)},
        {"eval_threshold", number(&RunConfig::eval_threshold)},
        {"rpf", enumeration(&RunConfig::rpf, kRpf)},
        {"ugema", enumeration(&RunConfig::ugema, kUgema)},
        {"entropy_filter", enumeration(&RunConfig::entropy_filter, kEntropy)},
        {"teacher_view", enumeration(&RunConfig::teacher_view, kView)},
        {"ugema_metric", enumeration(&RunConfig::ugema_metric, kMetric)},
        {"entropy_form", enumeration(&RunConfig::entropy_form, kForm)},
        {"per_image_prototypes", enumeration(&RunConfig::per_image_prototypes, kBool)},
        {"refined_distances", enumeration(&RunConfig::refined_distances, kDist)},
    };
    return f;
}

const Field& field(const std::string& key) {
    for (const auto& [k, f] : fields())
        if (k == key) return f;
    throw ConfigError("config: unknown key '" + key + "'");
}

} // namespace

void RunConfig::set(const std::string& key, const std::string& value) { field(key).set(*this, key, trim(value)); }

std::string RunConfig::get(const std::string& key) const { return field(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
    static const std::vector<std::string> k = [] {
        std::vector<std::string> out;
        for (const auto& [name, f] : fields()) out.push_back(name);
        return out;
    }();
    return k;
}

void RunConfig::apply_toggle(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        apply_preset(*this, trim(assignment));
        return;
    }
    const std::string name = trim(assignment.substr(0, eq));
    static const std::vector<std::string> toggles = {"rpf",          "ugema",        "entropy_filter",
                                                     "teacher_view", "ugema_metric", "entropy_form",
                                                     "eta2_mode",    "per_image_prototypes", "refined_distances"};
    if (name == "preset") {
        apply_preset(*this, trim(assignment.substr(eq + 1)));
        return;
    }
    if (std::find(toggles.begin(), toggles.end(), name) == toggles.end())
        throw ConfigError("toggle: '" + name + "' is not a component toggle");
    set(name, assignment.substr(eq + 1));
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const auto& [k, f] : fields()) os << k << " = " << f.get(*this) << '\n';
    return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
    RunConfig c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write config " + path.string());
    out << to_text();
}

std::string RunConfig::toggle_label() const {
    return "rpf=" + get("rpf") + " ugema=" + get("ugema") + " entropy_filter=" + get("entropy_filter");
}

const std::vector<AblationPreset>& ablation_lattice() {
    static const std::vector<AblationPreset> rows = {
        {"vanilla", RpfMode::Off, EntropyFilter::Off, UgemaMode::PlainEma},
        {"rpf", RpfMode::Refined, EntropyFilter::Off, UgemaMode::PlainEma},
        {"entfilt", RpfMode::Off, EntropyFilter::On, UgemaMode::PlainEma},
        {"entfilt+rpf", RpfMode::Refined, EntropyFilter::On, UgemaMode::PlainEma},
        {"ugema", RpfMode::Off, EntropyFilter::Off, UgemaMode::On},
        {"ugema+entfilt", RpfMode::Off, EntropyFilter::On, UgemaMode::On},
        {"ugema+rpf", RpfMode::Refined, EntropyFilter::Off, UgemaMode::On},
        {"full", RpfMode::Refined, EntropyFilter::On, UgemaMode::On},
    };
    return rows;
}

void apply_preset(RunConfig& config, const std::string& name) {
    for (const auto& p : ablation_lattice()) {
        if (p.name != name) continue;
        config.rpf = p.rpf;
        config.entropy_filter = p.entropy_filter;
        config.ugema = p.ugema;
        return;
    }
    std::string options;
    for (const auto& p : ablation_lattice()) options += (options.empty() ? "" : ", ") + p.name;
    throw ConfigError("unknown preset '" + name + "' (known: " + options + ")");
}

} // namespace up2d
