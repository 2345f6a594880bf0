// Library walkthrough on the toy corpus: purity, descriptions, tasks,
// simulated judgments and the score report.

#include <iostream>

#include "semcoh/semcoh.hpp"

int main() {
  using namespace semcoh;
  const auto toy = make_toy_corpus();
  const auto purity = class_purity(toy.clustering, toy.labels);

  const auto index = build_index(toy.captions, toy.caption_embeddings, toy.clustering);
  const auto descriptions = select_descriptions(index, SelectionOptions{});

  const auto learn = build_learnability_tasks(toy.clustering, toy_study_config(toy), nullptr);
  const auto desc = derive_describability_tasks(learn, descriptions);
  const auto responses = simulate_annotators(desc, 0.85, 1);
  const auto stats = class_statistics(score_responses(desc, responses));

  for (const auto& s : stats) {
    const auto* p = purity.find(s.class_id);
    const auto* d = descriptions.find(s.class_id);
    std::cout << s.class_id << "\tpurity=" << (p && p->purity ? *p->purity : 0.0) << "\tcoherence=" << s.coherence.value_or(0.0)
              << "\t" << (d ? d->text : "") << '\n';
  }
  return 0;
}
