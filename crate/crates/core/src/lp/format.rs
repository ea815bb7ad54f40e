use std::io::Write;

use super::{LpProblem, VarKind};

/// Writes the problem in CPLEX LP text format. Variables are named `x0`,
/// `x1`, … unless `names` is given.
pub fn write_lp_format<W: Write>(
    p: &LpProblem,
    names: Option<&[String]>,
    mut w: W,
) -> std::io::Result<()> {
    let name = |j: usize| -> String {
        match names {
            Some(ns) => ns[j].clone(),
            None => format!("x{j}"),
        }
    };
    writeln!(w, "Minimize")?;
    write!(w, " obj:")?;
    write_terms(&mut w, p.objective().iter().copied().enumerate(), &name)?;
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for r in 0..p.n_rows() {
        write!(w, " r{r}:")?;
        write_terms(&mut w, p.row(r).iter().copied().enumerate(), &name)?;
        writeln!(w, " <= {:?}", p.rhs()[r])?;
    }
    writeln!(w, "Bounds")?;
    for (j, kind) in p.kinds().iter().enumerate() {
        match kind {
            VarKind::Free => writeln!(w, " {} free", name(j))?,
            VarKind::NonNeg => writeln!(w, " {} >= 0", name(j))?,
        }
    }
    writeln!(w, "End")
}

fn write_terms<W: Write>(
    w: &mut W,
    terms: impl Iterator<Item = (usize, f64)>,
    name: &dyn Fn(usize) -> String,
) -> std::io::Result<()> {
    let mut any = false;
    for (j, c) in terms.filter(|(_, c)| *c != 0.0) {
        let sign = if c < 0.0 { '-' } else { '+' };
        write!(w, " {sign} {:?} {}", c.abs(), name(j))?;
        any = true;
    }
    if !any {
        write!(w, " 0 {}", name(0))?;
    }
    Ok(())
}
