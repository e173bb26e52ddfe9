use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::retrieval::tokenize;

use super::split::query_key;
use super::{split_qids, Example, Label, RegimeKind, SplitName, TokenId, Vocab};

#[derive(Clone, Debug)]
pub struct QueryRecord {
    pub qid: String,
    pub collection: String,
    pub domain: String,
    pub text: String,
    pub terms: Vec<String>,
    pub tokens: Vec<TokenId>,
    /// `(answer index, label)` in input order.
    pub judgments: Vec<(usize, Label)>,
    pub split: SplitName,
}

#[derive(Clone, Debug)]
pub struct AnswerRecord {
    pub aid: String,
    pub collection: String,
    pub domain: String,
    pub text: String,
    pub terms: Vec<String>,
    pub tokens: Vec<TokenId>,
    pub split: SplitName,
}

/// Queries and answers of a dataset, tokenized and interned.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub vocab: Vocab,
    pub queries: Vec<QueryRecord>,
    pub answers: Vec<AnswerRecord>,
}

impl QueryRecord {
    /// Domain label under `kind`: the topic for cross-topic runs, the
    /// collection for cross-collection runs.
    pub fn domain_key(&self, kind: RegimeKind) -> &str {
        match kind {
            RegimeKind::CrossTopic => &self.domain,
            RegimeKind::CrossCollection => &self.collection,
        }
    }

    pub fn relevant(&self) -> impl Iterator<Item = usize> + '_ {
        self.judgments.iter().filter(|(_, l)| *l == Label::Relevant).map(|(a, _)| *a)
    }

    pub fn nonrelevant(&self) -> impl Iterator<Item = usize> + '_ {
        self.judgments.iter().filter(|(_, l)| *l == Label::Nonrelevant).map(|(a, _)| *a)
    }
}

impl AnswerRecord {
    pub fn domain_key(&self, kind: RegimeKind) -> &str {
        match kind {
            RegimeKind::CrossTopic => &self.domain,
            RegimeKind::CrossCollection => &self.collection,
        }
    }
}

impl Corpus {
    /// Builds the corpus, extending `vocab` with unseen tokens. Every query
    /// starts in the train split until [`Corpus::assign_splits`] runs.
    pub fn build(examples: &[Example], mut vocab: Vocab) -> Result<Corpus> {
        let mut queries: Vec<QueryRecord> = Vec::new();
        let mut answers: Vec<AnswerRecord> = Vec::new();
        let mut qindex: HashMap<String, usize> = HashMap::new();
        let mut aindex: HashMap<String, usize> = HashMap::new();
        let mut intern = |text: &str| {
            let terms = tokenize(text);
            let tokens = terms.iter().map(|t| vocab.intern(t)).collect::<Vec<_>>();
            (terms, tokens)
        };
        for ex in examples {
            let akey = query_key(&ex.collection, &ex.aid);
            let a = match aindex.get(&akey) {
                Some(&a) => {
                    if answers[a].text != ex.answer {
                        return Err(Error::Data(format!("answer {} has conflicting texts", ex.aid)));
                    }
                    a
                }
                None => {
                    let (terms, tokens) = intern(&ex.answer);
                    answers.push(AnswerRecord {
                        aid: ex.aid.clone(),
                        collection: ex.collection.clone(),
                        domain: ex.domain.clone(),
                        text: ex.answer.clone(),
                        terms,
                        tokens,
                        split: SplitName::Train,
                    });
                    aindex.insert(akey, answers.len() - 1);
                    answers.len() - 1
                }
            };
            let qkey = query_key(&ex.collection, &ex.qid);
            let q = match qindex.get(&qkey) {
                Some(&q) => q,
                None => {
                    let (terms, tokens) = intern(&ex.query);
                    queries.push(QueryRecord {
                        qid: ex.qid.clone(),
                        collection: ex.collection.clone(),
                        domain: ex.domain.clone(),
                        text: ex.query.clone(),
                        terms,
                        tokens,
                        judgments: Vec::new(),
                        split: SplitName::Train,
                    });
                    qindex.insert(qkey, queries.len() - 1);
                    queries.len() - 1
                }
            };
            queries[q].judgments.push((a, ex.label));
        }
        Ok(Corpus { vocab, queries, answers })
    }

    /// 80/10/10 split of each `(collection, domain)` group by qid. Answers
    /// follow the first query that judged them.
    pub fn assign_splits(&mut self, seed: u64) -> Result<()> {
        let mut groups: BTreeMap<(String, String), BTreeSet<String>> = BTreeMap::new();
        for q in &self.queries {
            groups
                .entry((q.collection.clone(), q.domain.clone()))
                .or_default()
                .insert(query_key(&q.collection, &q.qid));
        }
        let mut assign = HashMap::new();
        for keys in groups.values() {
            assign.extend(split_qids(keys, seed)?);
        }
        let mut answer_split: Vec<Option<SplitName>> = vec![None; self.answers.len()];
        for q in &mut self.queries {
            q.split = assign[&query_key(&q.collection, &q.qid)];
            for &(a, _) in &q.judgments {
                answer_split[a].get_or_insert(q.split);
            }
        }
        for (a, s) in self.answers.iter_mut().zip(answer_split) {
            a.split = s.unwrap_or(SplitName::Train);
        }
        Ok(())
    }

    /// Distinct domain labels under `kind`, sorted.
    pub fn domains(&self, kind: RegimeKind) -> Vec<String> {
        let set: BTreeSet<&str> = self.queries.iter().map(|q| q.domain_key(kind)).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn queries_in<'a>(
        &'a self,
        kind: RegimeKind,
        domain: &'a str,
        split: SplitName,
    ) -> impl Iterator<Item = usize> + 'a {
        self.queries
            .iter()
            .enumerate()
            .filter(move |(_, q)| q.split == split && q.domain_key(kind) == domain)
            .map(|(i, _)| i)
    }

    /// Candidate universe of a query: answers of its collection in its split.
    pub fn universe(&self, collection: &str, split: SplitName) -> Vec<usize> {
        self.answers
            .iter()
            .enumerate()
            .filter(|(_, a)| a.collection == collection && a.split == split)
            .map(|(i, _)| i)
            .collect()
    }
}
