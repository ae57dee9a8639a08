//! Algorithmic Hangul syllable decomposition (Unicode §3.12 arithmetic).

const S_BASE: u32 = 0xAC00;
const L_BASE: u32 = 0x1100;
const V_BASE: u32 = 0x1161;
const T_BASE: u32 = 0x11A7;
const V_COUNT: u32 = 21;
const T_COUNT: u32 = 28;
const N_COUNT: u32 = V_COUNT * T_COUNT;
const S_COUNT: u32 = 19 * N_COUNT;

/// Leading, vowel and (optional) trailing jamo indexes of a syllable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JamoIndex {
    pub lead: u32,
    pub vowel: u32,
    /// 0 means no trailing consonant.
    pub trail: u32,
}

pub fn syllable_index(c: char) -> Option<JamoIndex> {
    let s = (c as u32).checked_sub(S_BASE)?;
    if s >= S_COUNT {
        return None;
    }
    Some(JamoIndex {
        lead: s / N_COUNT,
        vowel: (s % N_COUNT) / T_COUNT,
        trail: s % T_COUNT,
    })
}

/// Pushes the conjoining jamo of `c`, or `c` unchanged if it is not a
/// precomposed Hangul syllable.
pub fn push_decomposed(c: char, out: &mut String) {
    match syllable_index(c) {
        None => out.push(c),
        Some(j) => {
            // all three ranges are assigned code points
            out.push(char::from_u32(L_BASE + j.lead).unwrap());
            out.push(char::from_u32(V_BASE + j.vowel).unwrap());
            if j.trail != 0 {
                out.push(char::from_u32(T_BASE + j.trail).unwrap());
            }
        }
    }
}

pub fn decompose(s: &str) -> String {
    let mut out = String::with_capacity(s.len() * 3);
    for c in s.chars() {
        push_decomposed(c, &mut out);
    }
    out
}
