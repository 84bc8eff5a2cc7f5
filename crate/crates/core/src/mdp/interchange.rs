//! Plain-text interchange format for [`MissionModel`].
//!
//! ```text
//! mission-mdp v1
//! [dimensions]
//! states <S>
//! actions <A>
//! horizon <H>
//! step_seconds <seconds>
//! epoch <RFC 3339 timestamp>
//! [initial]
//! <s> <p>                  one line per state with positive mass
//! [mask]
//! <h> <s> <a> <a> ...      admissible actions of (s, h); pairs not listed admit every action
//! [reward]
//! <h> <s> <a> <r>          nonzero rewards only; missing entries are 0
//! [kernel <h>]             one section per step h = 0..H-1
//! <s> <a> <s'> <p>
//! [end]
//! ```
//!
//! Tokens are separated by whitespace. Blank lines and lines starting with
//! `#` are ignored. Reals are written with 17 significant digits, which
//! round-trips every `f64` exactly.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};

use super::{Mdp, MissionModel, ModelError, TimeGrid};

const MAGIC: &str = "mission-mdp v1";

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_model<W: Write>(model: &MissionModel, mut out: W) -> Result<(), ModelError> {
    let (ns, na, horizon) = (model.num_states(), model.num_actions(), model.horizon());
    let mut buf = String::new();
    writeln!(buf, "{MAGIC}").unwrap();
    writeln!(buf, "[dimensions]").unwrap();
    writeln!(buf, "states {ns}").unwrap();
    writeln!(buf, "actions {na}").unwrap();
    writeln!(buf, "horizon {horizon}").unwrap();
    writeln!(buf, "step_seconds {}", real(model.time().step_seconds())).unwrap();
    writeln!(buf, "epoch {}", model.time().epoch().to_rfc3339()).unwrap();
    writeln!(buf, "[initial]").unwrap();
    for &(s, p) in model.initial() {
        writeln!(buf, "{s} {}", real(p)).unwrap();
    }
    out.write_all(buf.as_bytes())?;
    buf.clear();

    writeln!(buf, "[mask]").unwrap();
    for h in 0..horizon {
        for s in 0..ns {
            let adm: Vec<usize> = (0..na).filter(|&a| model.is_admissible(s, a, h)).collect();
            if adm.len() != na {
                write!(buf, "{h} {s}").unwrap();
                for a in adm {
                    write!(buf, " {a}").unwrap();
                }
                buf.push('\n');
            }
        }
    }
    writeln!(buf, "[reward]").unwrap();
    for h in 0..horizon {
        for s in 0..ns {
            for a in 0..na {
                let r = model.reward(s, a, h);
                if r != 0.0 {
                    writeln!(buf, "{h} {s} {a} {}", real(r)).unwrap();
                }
            }
        }
    }
    out.write_all(buf.as_bytes())?;
    for h in 0..horizon {
        buf.clear();
        writeln!(buf, "[kernel {h}]").unwrap();
        for s in 0..ns {
            for a in 0..na {
                if model.is_admissible(s, a, h) {
                    for (t, p) in model.successors(s, a, h) {
                        writeln!(buf, "{s} {a} {t} {}", real(p)).unwrap();
                    }
                }
            }
        }
        out.write_all(buf.as_bytes())?;
    }
    out.write_all(b"[end]\n")?;
    Ok(())
}

#[derive(Debug, PartialEq)]
enum Section {
    Dimensions,
    Initial,
    Mask,
    Reward,
    Kernel(usize),
    End,
}

struct Dims {
    states: Option<usize>,
    actions: Option<usize>,
    horizon: Option<usize>,
    step_seconds: Option<f64>,
    epoch: Option<DateTime<Utc>>,
}

pub fn read_model<R: BufRead>(input: R) -> Result<MissionModel, ModelError> {
    let err = |line: usize, msg: String| ModelError::Parse { line, msg };
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));

    match lines.next() {
        Some((_, Ok(l))) if l.trim() == MAGIC => {}
        Some((n, Ok(l))) => return Err(err(n, format!("expected header `{MAGIC}`, found `{l}`"))),
        Some((_, Err(e))) => return Err(e.into()),
        None => return Err(err(1, "empty input".into())),
    }

    let mut dims = Dims { states: None, actions: None, horizon: None, step_seconds: None, epoch: None };
    let mut section = None;
    let mut builder: Option<super::MissionModelBuilder> = None;
    let mut initial = Vec::new();
    let mut masked: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    let mut rows: std::collections::BTreeMap<(usize, usize, usize), Vec<(usize, f64)>> = Default::default();

    for (n, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if section == Some(Section::End) {
            return Err(err(n, "content after [end]".into()));
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let next = match name.split_whitespace().collect::<Vec<_>>().as_slice() {
                ["dimensions"] => Section::Dimensions,
                ["initial"] => Section::Initial,
                ["mask"] => Section::Mask,
                ["reward"] => Section::Reward,
                ["end"] => Section::End,
                ["kernel", h] => Section::Kernel(h.parse().map_err(|_| err(n, format!("bad kernel step `{h}`")))?),
                _ => return Err(err(n, format!("unknown section `[{name}]`"))),
            };
            if section.is_none() && next != Section::Dimensions {
                return Err(err(n, "[dimensions] must come first".into()));
            }
            if section.is_some() && next == Section::Dimensions {
                return Err(err(n, "duplicate [dimensions]".into()));
            }
            if section == Some(Section::Dimensions) {
                let (Some(ns), Some(na), Some(hz), Some(dt), Some(ep)) =
                    (dims.states, dims.actions, dims.horizon, dims.step_seconds, dims.epoch)
                else {
                    return Err(err(n, "incomplete [dimensions]".into()));
                };
                let time = TimeGrid::new(hz, dt, ep)?;
                builder = Some(MissionModel::builder(ns, na, time));
            }
            if let Section::Kernel(h) = next {
                if h >= dims.horizon.unwrap_or(0) {
                    return Err(err(n, format!("kernel step {h} outside horizon")));
                }
            }
            section = Some(next);
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let int = |t: &str| t.parse::<usize>().map_err(|_| err(n, format!("expected integer, found `{t}`")));
        let flt = |t: &str| t.parse::<f64>().map_err(|_| err(n, format!("expected real, found `{t}`")));
        let ns = dims.states.unwrap_or(0);
        let na = dims.actions.unwrap_or(0);
        let hz = dims.horizon.unwrap_or(0);
        let check = |s: usize, a: usize, h: usize| {
            if s >= ns || a >= na || h >= hz {
                Err(err(n, format!("index (s={s}, a={a}, h={h}) out of range")))
            } else {
                Ok(())
            }
        };
        match &section {
            None => return Err(err(n, "data before any section".into())),
            Some(Section::Dimensions) => {
                let [key, value] = toks.as_slice() else {
                    return Err(err(n, "expected `key value`".into()));
                };
                match *key {
                    "states" => dims.states = Some(int(value)?),
                    "actions" => dims.actions = Some(int(value)?),
                    "horizon" => dims.horizon = Some(int(value)?),
                    "step_seconds" => dims.step_seconds = Some(flt(value)?),
                    "epoch" => {
                        dims.epoch = Some(
                            DateTime::parse_from_rfc3339(value)
                                .map_err(|e| err(n, format!("bad epoch: {e}")))?
                                .with_timezone(&Utc),
                        )
                    }
                    other => return Err(err(n, format!("unknown dimension `{other}`"))),
                }
            }
            Some(Section::Initial) => {
                let [s, p] = toks.as_slice() else { return Err(err(n, "expected `s p`".into())) };
                let s = int(s)?;
                check(s, 0, 0)?;
                initial.push((s, flt(p)?));
            }
            Some(Section::Mask) => {
                if toks.len() < 2 {
                    return Err(err(n, "expected `h s a...`".into()));
                }
                let (h, s) = (int(toks[0])?, int(toks[1])?);
                let acts = toks[2..].iter().map(|t| int(t)).collect::<Result<Vec<_>, _>>()?;
                check(s, 0, h)?;
                for &a in &acts {
                    check(s, a, h)?;
                }
                masked.push((h, s, acts));
            }
            Some(Section::Reward) => {
                let [h, s, a, r] = toks.as_slice() else { return Err(err(n, "expected `h s a r`".into())) };
                let (h, s, a) = (int(h)?, int(s)?, int(a)?);
                check(s, a, h)?;
                builder.as_mut().unwrap().set_reward(s, a, h, flt(r)?);
            }
            Some(Section::Kernel(h)) => {
                let [s, a, t, p] = toks.as_slice() else { return Err(err(n, "expected `s a s' p`".into())) };
                let (s, a, t) = (int(s)?, int(a)?, int(t)?);
                check(s, a, *h)?;
                check(t, 0, 0)?;
                rows.entry((*h, s, a)).or_default().push((t, flt(p)?));
            }
            Some(Section::End) => unreachable!(),
        }
    }
    if section != Some(Section::End) {
        return Err(ModelError::Parse { line: 0, msg: "missing [end]".into() });
    }
    let mut b = builder.ok_or_else(|| ModelError::Parse { line: 0, msg: "no [dimensions]".into() })?;
    for (h, s, acts) in masked {
        for a in 0..dims.actions.unwrap() {
            b.set_admissible(s, a, h, acts.contains(&a));
        }
    }
    for ((h, s, a), row) in rows {
        b.set_row(s, a, h, row);
    }
    b.set_initial(initial);
    b.build()
}
