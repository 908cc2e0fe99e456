#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mambatext/rng.hpp"
#include "mambatext/text.hpp"

namespace mambatext {

namespace {

// A sentence template: one uniformly chosen option per slot, joined with
// spaces. Punctuation is written attached so word counts stay natural.
using Choice = std::vector<const char*>;
using Template = std::vector<Choice>;

std::string realize(const Template& tpl, std::mt19937_64& rng) {
    std::string out;
    for (const Choice& c : tpl) {
        std::uniform_int_distribution<std::size_t> pick(0, c.size() - 1);
        if (!out.empty()) out.push_back(' ');
        out += c[pick(rng)];
    }
    return out;
}

std::string pick(const std::vector<std::string>& bank, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> d(0, bank.size() - 1);
    return bank[d(rng)];
}

// Expands "@" into right/left variants; templates without "@" pass through.
std::vector<std::string> expand_sides(std::initializer_list<const char*> templates) {
    std::vector<std::string> out;
    for (const char* t : templates) {
        std::string s(t);
        if (s.find('@') == std::string::npos) {
            out.push_back(s);
            continue;
        }
        for (const char* side : {"right", "left"}) {
            std::string v = s;
            std::size_t pos;
            while ((pos = v.find('@')) != std::string::npos) v.replace(pos, 1, side);
            out.push_back(v);
        }
    }
    return out;
}

struct ClassBank {
    // Findings-level sentences that determine the class, and the matching
    // impression lines. Together these are what evidence_word_index hunts.
    std::vector<std::string> evidence;
    std::vector<std::string> impression;
};

struct PresetBank {
    std::vector<std::string> exams;
    std::vector<std::string> histories;
    std::vector<Template> fillers;
    std::vector<ClassBank> classes;
    std::vector<std::string> class_names;
};

const PresetBank& dvt_bank() {
    static const PresetBank bank = [] {
        PresetBank b;
        b.class_names = {"no_acute_dvt", "upper_extremity_dvt", "lower_extremity_dvt"};
        b.exams = {"Venous duplex doppler ultrasound.",
                   "Duplex doppler evaluation of the deep venous system.",
                   "Venous duplex examination with compression and spectral analysis."};
        b.histories = {"Extremity pain and swelling.",
                       "Unilateral leg swelling.",
                       "Postoperative screening for deep venous thrombosis.",
                       "Elevated d-dimer.",
                       "History of prior venous thromboembolism.",
                       "Arm swelling after central venous line placement.",
                       "Calf tenderness and erythema.",
                       "Evaluation for venous insufficiency."};
        b.fillers = {
            {{"The"},
             {"right", "left"},
             {"common femoral", "femoral", "popliteal", "posterior tibial", "peroneal",
              "greater saphenous"},
             {"vein demonstrates", "vein shows"},
             {"normal compressibility and phasic flow.", "spontaneous flow with normal augmentation.",
              "normal color filling and doppler waveforms."}},
            {{"The"},
             {"right", "left"},
             {"subclavian vein", "internal jugular vein", "axillary vein", "brachial vein"},
             {"is patent with normal doppler waveforms.",
              "demonstrates normal compressibility where accessible.",
              "shows normal respiratory phasicity."}},
            {{"Normal"},
             {"respiratory phasicity", "augmentation response", "spectral waveforms"},
             {"is demonstrated", "is seen"},
             {"throughout the examined segments.", "in the interrogated veins."}},
            {{"Grayscale, color, and spectral doppler images were obtained",
              "Compression maneuvers were performed"},
             {"at each interrogated level.", "throughout the examined veins."}},
            {{"The patient tolerated the examination"}, {"well.", "without difficulty."}},
            {{"No evidence of"},
             {"superficial thrombophlebitis.", "a popliteal fossa cyst.",
              "hematoma or focal fluid collection."}},
            {{"No"},
             {"intraluminal echogenicity", "thrombus"},
             {"is identified within the"},
             {"right", "left"},
             {"calf veins.", "greater saphenous vein.", "distal deep veins."}},
            {{"Flow is noted within the"},
             {"right", "left"},
             {"venous segments with"},
             {"normal response to augmentation.", "appropriate valsalva response."}},
            {{"Soft tissues of the"},
             {"right", "left"},
             {"extremity are", "limb are"},
             {"unremarkable.", "without focal abnormality."}},
        };
        ClassBank neg;
        neg.evidence = {"No evidence of acute deep venous thrombosis in the visualized veins.",
                        "All imaged deep veins are patent and fully compressible.",
                        "No sonographic evidence of acute deep venous thrombosis.",
                        "The deep venous system is patent without intraluminal thrombus."};
        neg.impression = {"No acute deep venous thrombosis.",
                          "Negative examination for acute deep venous thrombosis.",
                          "No acute DVT."};
        ClassBank upper;
        upper.evidence =
            expand_sides({"Acute occlusive thrombus is identified within the @ subclavian vein.",
                          "The @ internal jugular vein is noncompressible with intraluminal "
                          "echogenic thrombus.",
                          "Acute deep venous thrombosis involving the @ axillary and brachial "
                          "veins.",
                          "Echogenic clot distends the @ basilic vein consistent with acute "
                          "thrombosis."});
        upper.impression =
            expand_sides({"Acute @ upper extremity deep venous thrombosis.",
                          "Acute thrombosis of the @ subclavian and axillary veins."});
        ClassBank lower;
        lower.evidence =
            expand_sides({"Acute occlusive thrombus is identified within the @ femoral vein.",
                          "The @ popliteal vein is noncompressible with intraluminal echogenic "
                          "thrombus.",
                          "Acute deep venous thrombosis involving the @ posterior tibial and "
                          "peroneal veins.",
                          "Echogenic clot distends the @ common femoral vein consistent with "
                          "acute thrombosis."});
        lower.impression =
            expand_sides({"Acute @ lower extremity deep venous thrombosis.",
                          "Acute thrombosis of the @ femoral and popliteal veins."});
        b.classes = {neg, upper, lower};
        return b;
    }();
    return bank;
}

const PresetBank& pe_bank() {
    static const PresetBank bank = [] {
        PresetBank b;
        b.class_names = {"no_pe", "pe"};
        b.exams = {"CT pulmonary angiogram.", "CT angiography of the chest.",
                   "Contrast enhanced CT angiogram of the pulmonary arteries."};
        b.histories = {"Chest pain and shortness of breath.",
                       "Tachycardia and hypoxia.",
                       "Elevated d-dimer.",
                       "Syncope.",
                       "Pleuritic chest pain.",
                       "Shortness of breath after recent surgery.",
                       "Evaluation for pulmonary embolism.",
                       "Acute dyspnea."};
        b.fillers = {
            {{"The"},
             {"thoracic aorta", "aortic arch", "descending thoracic aorta"},
             {"is normal in caliber", "appears unremarkable"},
             {"without dissection.", "without aneurysmal dilatation."}},
            {{"The heart is"},
             {"normal in size", "top normal in size"},
             {"without pericardial effusion.", "with normal chamber proportions."}},
            {{"The lungs are", "The lungs remain"},
             {"clear", "well expanded"},
             {"without focal consolidation.", "without suspicious nodularity.",
              "with minimal dependent atelectasis."}},
            {{"No"},
             {"pleural effusion", "pneumothorax", "mediastinal lymphadenopathy",
              "axillary lymphadenopathy", "hilar lymphadenopathy"},
             {"is identified.", "is seen."}},
            {{"Degenerative changes are noted in the"},
             {"thoracic spine.", "visualized spine.", "imaged skeleton."}},
            {{"A small hiatal hernia", "A calcified granuloma", "A subcentimeter pulmonary nodule"},
             {"is incidentally noted.", "is again demonstrated."}},
            {{"The central airways are patent", "The trachea and mainstem bronchi are patent"},
             {"without endobronchial lesion.", "bilaterally."}},
            {{"Visualized portions of the upper abdomen are",
              "The imaged upper abdominal organs appear"},
             {"unremarkable.", "within normal limits."}},
            {{"Contrast opacification of the pulmonary arterial tree is"},
             {"adequate.", "excellent.", "technically adequate for evaluation."}},
            {{"No evidence of"},
             {"right heart strain.", "pneumonia.", "acute aortic syndrome."}},
            {{"Evaluation of the subsegmental branches is"},
             {"mildly limited by respiratory motion.", "slightly limited by streak artifact."}},
            {{"There is no"},
             {"focal airspace disease.", "worrisome osseous lesion.", "acute rib fracture."}},
            {{"The main pulmonary artery is"},
             {"normal in caliber.", "of normal diameter."}},
        };
        ClassBank neg;
        neg.evidence = {
            "No filling defect is identified within the main, lobar, or segmental pulmonary "
            "arteries.",
            "The pulmonary arterial tree enhances homogeneously without evidence of embolus.",
            "No evidence of acute pulmonary embolism to the subsegmental level.",
            "The pulmonary arteries are patent without filling defect."};
        neg.impression = {"No acute pulmonary embolism.",
                          "Negative CT angiogram for pulmonary embolism.",
                          "No evidence of pulmonary embolism."};
        ClassBank pos;
        pos.evidence = expand_sides(
            {"Acute filling defect is identified within the @ lower lobe segmental pulmonary "
             "artery.",
             "Occlusive embolus expands the @ main pulmonary artery.",
             "Acute pulmonary embolus within the @ upper lobe anterior segmental branch.",
             "Multiple bilateral segmental and subsegmental filling defects consistent with "
             "acute pulmonary emboli.",
             "A saddle embolus spans the pulmonary arterial bifurcation."});
        pos.impression = expand_sides({"Acute pulmonary embolism.",
                                       "Acute @ sided pulmonary embolism.",
                                       "Acute bilateral segmental pulmonary emboli."});
        b.classes = {neg, pos};
        return b;
    }();
    return bank;
}

const PresetBank& bank_for(const std::string& preset) {
    if (preset == "dvt") return dvt_bank();
    if (preset == "pe") return pe_bank();
    throw InvalidSpec("unknown generator preset: " + preset);
}

// Exact class counts by largest remainder.
std::vector<int> class_quotas(int n, const std::vector<double>& probs) {
    std::vector<int> counts(probs.size());
    std::vector<std::pair<double, std::size_t>> rem(probs.size());
    int assigned = 0;
    for (std::size_t c = 0; c < probs.size(); ++c) {
        const double exact = probs[c] * n;
        counts[c] = static_cast<int>(std::floor(exact + 1e-12));
        assigned += counts[c];
        rem[c] = {exact - counts[c], c};
    }
    std::stable_sort(rem.begin(), rem.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; i < n - assigned; ++i) ++counts[rem[static_cast<std::size_t>(i)].second];
    return counts;
}

std::string spec_to_json(const GeneratorSpec& s) {
    nlohmann::json j;
    j["n_docs"] = s.n_docs;
    j["class_probs"] = s.class_probs;
    j["min_words"] = s.min_words;
    j["mean_words"] = s.mean_words;
    j["max_words"] = s.max_words;
    j["tail_frac"] = s.tail_frac;
    j["evidence_frac"] = s.evidence_frac;
    j["evidence_word_offset"] = s.evidence_word_offset;
    j["seed"] = s.seed;
    return j.dump();
}

std::string build_doc(const GeneratorSpec& spec, const PresetBank& bank, int label, bool late,
                      std::mt19937_64& rng) {
    const double sd = std::max(1.0, (spec.max_words - spec.min_words) / 6.0);
    std::normal_distribution<double> len_dist(static_cast<double>(spec.mean_words), sd);
    std::uniform_int_distribution<int> long_len(620, 800);
    const long target = late ? long_len(rng)
                             : std::clamp(std::lround(len_dist(rng)),
                                          static_cast<long>(spec.min_words),
                                          static_cast<long>(spec.max_words));

    const ClassBank& cls = bank.classes[static_cast<std::size_t>(label)];
    const std::string impression = pick(cls.impression, rng);
    const std::string evidence = pick(cls.evidence, rng);
    std::string header = "EXAM: " + pick(bank.exams, rng) + "\nHISTORY: " +
                         pick(bank.histories, rng) + "\nFINDINGS:";
    const long reserve = static_cast<long>(word_count("IMPRESSION: " + impression));
    long cum = static_cast<long>(word_count(header));

    std::uniform_int_distribution<std::size_t> pick_filler(0, bank.fillers.size() - 1);
    std::vector<std::string> findings;
    auto push = [&](const std::string& s) {
        findings.push_back(s);
        cum += static_cast<long>(word_count(s));
    };

    if (!late) {
        push(evidence);
        if (label > 0) {
            // Positive findings often restate the clot in a second sentence.
            std::bernoulli_distribution again(0.5);
            if (again(rng)) push(pick(cls.evidence, rng));
        }
    } else {
        std::uniform_int_distribution<int> jitter(5, 40);
        const long gate = spec.evidence_word_offset + jitter(rng);
        while (cum < gate) push(realize(bank.fillers[pick_filler(rng)], rng));
        push(evidence);
    }
    while (true) {
        const std::string f = realize(bank.fillers[pick_filler(rng)], rng);
        if (cum + static_cast<long>(word_count(f)) > target - reserve) break;
        push(f);
    }

    std::string text = std::move(header);
    for (const std::string& s : findings) {
        text.push_back(' ');
        text += s;
    }
    text += "\nIMPRESSION: " + impression;
    return text;
}

Corpus generate(const GeneratorSpec& spec, const std::string& preset) {
    spec.validate();
    const PresetBank& bank = bank_for(preset);
    if (spec.class_probs.size() != bank.class_names.size())
        throw InvalidSpec("class_probs does not match the preset's class count");
    const int n = spec.n_docs;

    std::vector<int> labels;
    labels.reserve(static_cast<std::size_t>(n));
    const std::vector<int> quotas = class_quotas(n, spec.class_probs);
    for (std::size_t c = 0; c < quotas.size(); ++c)
        labels.insert(labels.end(), static_cast<std::size_t>(quotas[c]), static_cast<int>(c));
    auto label_rng = make_rng(spec.seed, "labels");
    std::shuffle(labels.begin(), labels.end(), label_rng);

    // Long documents: exactly floor(evidence_frac * positives) positives get
    // their class sentence after the word offset, and those documents are
    // long; the remaining long quota is drawn from the negatives so that a
    // filler-only prefix does not betray the label.
    std::vector<char> late(static_cast<std::size_t>(n), 0);
    std::vector<int> positives, negatives;
    for (int i = 0; i < n; ++i) (labels[static_cast<std::size_t>(i)] > 0 ? positives : negatives)
                                     .push_back(i);
    const auto late_count =
        static_cast<long>(std::floor(spec.evidence_frac * static_cast<double>(positives.size())));
    auto ev_rng = make_rng(spec.seed, "evidence");
    std::shuffle(positives.begin(), positives.end(), ev_rng);
    for (long i = 0; i < late_count; ++i) late[static_cast<std::size_t>(positives[i])] = 1;
    const long long_quota = std::lround(spec.tail_frac * n);
    long extra = long_quota - late_count;
    if (extra > 0) {
        auto tail_rng = make_rng(spec.seed, "tail");
        std::shuffle(negatives.begin(), negatives.end(), tail_rng);
        extra = std::min<long>(extra, static_cast<long>(negatives.size()));
        for (long i = 0; i < extra; ++i) late[static_cast<std::size_t>(negatives[i])] = 1;
    }

    Corpus corpus;
    corpus.class_names = bank.class_names;
    corpus.seed = spec.seed;
    corpus.preset = preset;
    corpus.spec_json = spec_to_json(spec);
    corpus.docs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto rng = make_rng(spec.seed, "doc." + std::to_string(i));
        Document d;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "%s-%04d", preset.c_str(), i);
        d.id = idbuf;
        d.label = labels[static_cast<std::size_t>(i)];
        d.text = build_doc(spec, bank, d.label, late[static_cast<std::size_t>(i)] != 0, rng);
        corpus.docs.push_back(std::move(d));
    }
    return corpus;
}

std::string to_lower_copy(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

}  // namespace

void GeneratorSpec::validate() const {
    if (n_docs < 1) throw InvalidSpec("n_docs must be >= 1");
    if (class_probs.size() < 2) throw InvalidSpec("need at least two classes");
    if (n_docs < static_cast<int>(class_probs.size()))
        throw InvalidSpec("n_docs must be at least the class count");
    double sum = 0.0;
    for (double p : class_probs) {
        if (p < 0.0) throw InvalidSpec("class probabilities must be non-negative");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidSpec("class probabilities must sum to 1");
    if (min_words < 10 || mean_words < min_words || max_words < mean_words)
        throw InvalidSpec("length settings must satisfy 10 <= min <= mean <= max");
    if (tail_frac < 0.0 || tail_frac > 1.0 || evidence_frac < 0.0 || evidence_frac > 1.0)
        throw InvalidSpec("tail_frac and evidence_frac must lie in [0, 1]");
    if (evidence_word_offset < 0) throw InvalidSpec("evidence_word_offset must be >= 0");
}

GeneratorSpec default_dvt_spec() {
    GeneratorSpec s;
    s.n_docs = 1000;
    s.class_probs = {0.78, 0.11, 0.11};
    s.min_words = 60;
    s.mean_words = 110;
    s.max_words = 160;
    s.tail_frac = 0.0;
    s.evidence_frac = 0.0;
    s.evidence_word_offset = 500;
    s.seed = 42;
    return s;
}

GeneratorSpec default_pe_spec() {
    GeneratorSpec s;
    s.n_docs = 900;
    s.class_probs = {0.88, 0.12};
    s.min_words = 140;
    s.mean_words = 200;
    s.max_words = 380;
    s.tail_frac = 0.10;
    s.evidence_frac = 0.30;
    s.evidence_word_offset = 500;
    s.seed = 42;
    return s;
}

Corpus generate_dvt_corpus(const GeneratorSpec& spec) { return generate(spec, "dvt"); }

Corpus generate_pe_corpus(const GeneratorSpec& spec) { return generate(spec, "pe"); }

int evidence_word_index(const Document& doc, const Corpus& corpus) {
    if (doc.label == 0) return -1;
    const PresetBank& bank = bank_for(corpus.preset);
    if (doc.label >= static_cast<int>(bank.classes.size()))
        throw LabelOutOfRange("evidence_word_index: label outside preset classes");
    const std::string text = to_lower_copy(doc.text);
    const ClassBank& cls = bank.classes[static_cast<std::size_t>(doc.label)];
    std::size_t best = std::string::npos;
    auto scan = [&](const std::vector<std::string>& sentences) {
        for (const std::string& s : sentences) {
            const std::size_t pos = text.find(to_lower_copy(s));
            if (pos != std::string::npos) best = std::min(best, pos);
        }
    };
    scan(cls.evidence);
    scan(cls.impression);
    if (best == std::string::npos) return -1;
    return static_cast<int>(word_count(doc.text.substr(0, best)));
}

}  // namespace mambatext
