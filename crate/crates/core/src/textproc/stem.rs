//! Snowball Spanish stemmer.
//!
//! Operates on a lowercased word. Suffix tables keep their accented forms, so
//! the word should still carry its accents; acute accents are stripped from
//! the stem at the end.

const PRONOUNS: &[&str] = &[
    "me", "se", "sela", "selo", "selas", "selos", "la", "le", "lo", "las", "les", "los", "nos",
];

const STEP1_R2_DELETE: &[&str] = &[
    "anza", "anzas", "ico", "ica", "icos", "icas", "ismo", "ismos", "able", "ables", "ible",
    "ibles", "ista", "istas", "oso", "osa", "osos", "osas", "amiento", "amientos", "imiento",
    "imientos",
];
const STEP1_ADOR: &[&str] = &[
    "adora", "ador", "ación", "adoras", "adores", "aciones", "ante", "antes", "ancia", "ancias",
];
const STEP1_LOGIA: &[&str] = &["logía", "logías"];
const STEP1_UCION: &[&str] = &["ución", "uciones"];
const STEP1_ENCIA: &[&str] = &["encia", "encias"];
const STEP1_AMENTE: &[&str] = &["amente"];
const STEP1_MENTE: &[&str] = &["mente"];
const STEP1_IDAD: &[&str] = &["idad", "idades"];
const STEP1_IVA: &[&str] = &["iva", "ivo", "ivas", "ivos"];

const Y_VERB: &[&str] = &[
    "ya", "ye", "yan", "yen", "yeron", "yendo", "yo", "yó", "yas", "yes", "yais", "yamos",
];

const VERB_GU: &[&str] = &["en", "es", "éis", "emos"];
const VERB_DELETE: &[&str] = &[
    "arían", "arías", "arán", "arás", "aríais", "aría", "aréis", "aríamos", "aremos", "ará",
    "aré", "erían", "erías", "erán", "erás", "eríais", "ería", "eréis", "eríamos", "eremos",
    "erá", "eré", "irían", "irías", "irán", "irás", "iríais", "iría", "iréis", "iríamos",
    "iremos", "irá", "iré", "aba", "ada", "ida", "ía", "ara", "iera", "ad", "ed", "id", "ase",
    "iese", "aste", "iste", "an", "aban", "ían", "aran", "ieran", "asen", "iesen", "aron",
    "ieron", "ado", "ido", "ando", "iendo", "ió", "ar", "er", "ir", "as", "abas", "adas",
    "idas", "ías", "aras", "ieras", "ases", "ieses", "ís", "áis", "abais", "íais", "arais",
    "ierais", "aseis", "ieseis", "asteis", "isteis", "ados", "idos", "amos", "ábamos",
    "íamos", "imos", "áramos", "iéramos", "iésemos", "ásemos",
];

const RESIDUAL_RV: &[&str] = &["os", "a", "o", "á", "í", "ó"];
const RESIDUAL_E: &[&str] = &["e", "é"];

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'á' | 'é' | 'í' | 'ó' | 'ú' | 'ü')
}

struct Word {
    chars: Vec<char>,
    rv: usize,
    r1: usize,
    r2: usize,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Group {
    R2Delete,
    Ador,
    Logia,
    Ucion,
    Encia,
    Amente,
    Mente,
    Idad,
    Iva,
}

const STEP1: &[(&[&str], Group)] = &[
    (STEP1_R2_DELETE, Group::R2Delete),
    (STEP1_ADOR, Group::Ador),
    (STEP1_LOGIA, Group::Logia),
    (STEP1_UCION, Group::Ucion),
    (STEP1_ENCIA, Group::Encia),
    (STEP1_AMENTE, Group::Amente),
    (STEP1_MENTE, Group::Mente),
    (STEP1_IDAD, Group::Idad),
    (STEP1_IVA, Group::Iva),
];

impl Word {
    fn new(word: &str) -> Self {
        let chars: Vec<char> = word.chars().collect();
        let n = chars.len();
        let mut w = Word {
            rv: n,
            r1: n,
            r2: n,
            chars,
        };
        w.mark_regions();
        w
    }

    fn mark_regions(&mut self) {
        let c = &self.chars;
        let n = c.len();
        let after_next = |from: usize, want_vowel: bool| -> Option<usize> {
            (from..n).find(|&i| is_vowel(c[i]) == want_vowel).map(|i| i + 1)
        };
        if n >= 2 {
            let rv = match (is_vowel(c[0]), is_vowel(c[1])) {
                (_, false) => after_next(2, true),
                (true, true) => after_next(2, false),
                (false, true) => (n >= 3).then_some(3),
            };
            if let Some(rv) = rv {
                self.rv = rv;
            }
        }
        let region_after = |from: usize| -> Option<usize> {
            let v = (from..n).find(|&i| is_vowel(c[i]))?;
            after_next(v + 1, false)
        };
        if let Some(r1) = region_after(0) {
            self.r1 = r1;
            if let Some(r2) = region_after(r1) {
                self.r2 = r2;
            }
        }
    }

    fn len(&self) -> usize {
        self.chars.len()
    }

    fn ends_with_at(&self, end: usize, suffix: &str) -> Option<usize> {
        let mut i = end;
        for ch in suffix.chars().rev() {
            if i == 0 || self.chars[i - 1] != ch {
                return None;
            }
            i -= 1;
        }
        Some(i)
    }

    /// Longest entry of `list` ending at `end`, with its start position.
    fn longest<'a>(&self, end: usize, list: &[&'a str]) -> Option<(&'a str, usize)> {
        list.iter()
            .filter_map(|s| self.ends_with_at(end, s).map(|start| (*s, start)))
            .min_by_key(|&(_, start)| start)
    }

    fn truncate(&mut self, at: usize) {
        self.chars.truncate(at);
    }

    fn replace_tail(&mut self, at: usize, with: &str) {
        self.chars.truncate(at);
        self.chars.extend(with.chars());
    }

    fn attached_pronoun(&mut self) {
        let Some((_, p_start)) = self.longest(self.len(), PRONOUNS) else {
            return;
        };
        const FORMS: &[&str] = &[
            "iéndo", "ándo", "ár", "ér", "ír", "ando", "iendo", "ar", "er", "ir", "yendo",
        ];
        let Some((form, f_start)) = self.longest(p_start, FORMS) else {
            return;
        };
        if f_start < self.rv {
            return;
        }
        match form {
            "iéndo" => self.replace_tail(f_start, "iendo"),
            "ándo" => self.replace_tail(f_start, "ando"),
            "ár" => self.replace_tail(f_start, "ar"),
            "ér" => self.replace_tail(f_start, "er"),
            "ír" => self.replace_tail(f_start, "ir"),
            "yendo" => {
                if f_start > 0 && self.chars[f_start - 1] == 'u' {
                    self.truncate(p_start);
                }
            }
            _ => self.truncate(p_start),
        }
    }

    fn standard_suffix(&mut self) -> bool {
        let end = self.len();
        let best = STEP1
            .iter()
            .filter_map(|(list, group)| self.longest(end, list).map(|(_, s)| (s, *group)))
            .min_by_key(|&(start, _)| start);
        let Some((start, group)) = best else {
            return false;
        };
        match group {
            Group::R2Delete => {
                if start < self.r2 {
                    return false;
                }
                self.truncate(start);
            }
            Group::Ador => {
                if start < self.r2 {
                    return false;
                }
                self.truncate(start);
                self.delete_if_r2(&["ic"]);
            }
            Group::Logia => {
                if start < self.r2 {
                    return false;
                }
                self.replace_tail(start, "log");
            }
            Group::Ucion => {
                if start < self.r2 {
                    return false;
                }
                self.replace_tail(start, "u");
            }
            Group::Encia => {
                if start < self.r2 {
                    return false;
                }
                self.replace_tail(start, "ente");
            }
            Group::Amente => {
                if start < self.r1 {
                    return false;
                }
                self.truncate(start);
                if let Some((s, st)) = self.longest(self.len(), &["iv", "os", "ic", "ad"]) {
                    if st >= self.r2 {
                        self.truncate(st);
                        if s == "iv" {
                            self.delete_if_r2(&["at"]);
                        }
                    }
                }
            }
            Group::Mente => {
                if start < self.r2 {
                    return false;
                }
                self.truncate(start);
                self.delete_if_r2(&["ante", "able", "ible"]);
            }
            Group::Idad => {
                if start < self.r2 {
                    return false;
                }
                self.truncate(start);
                self.delete_if_r2(&["abil", "ic", "iv"]);
            }
            Group::Iva => {
                if start < self.r2 {
                    return false;
                }
                self.truncate(start);
                self.delete_if_r2(&["at"]);
            }
        }
        true
    }

    fn delete_if_r2(&mut self, list: &[&str]) {
        if let Some((_, st)) = self.longest(self.len(), list) {
            if st >= self.r2 {
                self.truncate(st);
            }
        }
    }

    /// Longest suffix of `list` lying entirely inside RV.
    fn longest_in_rv<'a>(&self, list: &[&'a str]) -> Option<(&'a str, usize)> {
        list.iter()
            .filter_map(|s| self.ends_with_at(self.len(), s).map(|st| (*s, st)))
            .filter(|&(_, st)| st >= self.rv)
            .min_by_key(|&(_, st)| st)
    }

    fn y_verb_suffix(&mut self) -> bool {
        match self.longest_in_rv(Y_VERB) {
            Some((_, st)) if st > 0 && self.chars[st - 1] == 'u' => {
                self.truncate(st);
                true
            }
            _ => false,
        }
    }

    fn verb_suffix(&mut self) -> bool {
        let gu = self.longest_in_rv(VERB_GU);
        let plain = self.longest_in_rv(VERB_DELETE);
        let pick = match (gu, plain) {
            (Some(a), Some(b)) => Some(if a.1 <= b.1 { (a.1, true) } else { (b.1, false) }),
            (Some(a), None) => Some((a.1, true)),
            (None, Some(b)) => Some((b.1, false)),
            (None, None) => None,
        };
        let Some((st, is_gu)) = pick else {
            return false;
        };
        let mut cut = st;
        if is_gu && st >= 2 && self.chars[st - 1] == 'u' && self.chars[st - 2] == 'g' {
            cut = st - 1;
        }
        self.truncate(cut);
        true
    }

    fn residual_suffix(&mut self) {
        let end = self.len();
        let plain = self.longest(end, RESIDUAL_RV);
        let e = self.longest(end, RESIDUAL_E);
        match (plain, e) {
            (Some((_, st)), _) => {
                if st >= self.rv {
                    self.truncate(st);
                }
            }
            (None, Some((_, st))) => {
                if st >= self.rv {
                    self.truncate(st);
                    let n = self.len();
                    if n >= 2 && self.chars[n - 1] == 'u' && self.chars[n - 2] == 'g' && n - 1 >= self.rv
                    {
                        self.truncate(n - 1);
                    }
                }
            }
            (None, None) => {}
        }
    }

    fn postlude(&mut self) {
        for c in &mut self.chars {
            *c = match *c {
                'á' => 'a',
                'é' => 'e',
                'í' => 'i',
                'ó' => 'o',
                'ú' => 'u',
                other => other,
            };
        }
    }
}

/// Stems one lowercased Spanish word.
///
/// ```
/// use simann::textproc::stem_spanish;
/// assert_eq!(stem_spanish("tumores"), "tumor");
/// assert_eq!(stem_spanish("quirúrgica"), "quirurg");
/// ```
pub fn stem_spanish(word: &str) -> String {
    let mut w = Word::new(word);
    w.attached_pronoun();
    if !w.standard_suffix() && !w.y_verb_suffix() {
        w.verb_suffix();
    }
    w.residual_suffix();
    w.postlude();
    w.chars.into_iter().collect()
}
