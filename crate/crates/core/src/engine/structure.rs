//! Initial structures, extended-XYZ I/O and velocity initialization.

use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::engine::{KB, MVV2E};
use crate::error::{Error, Result};

/// A global configuration: box, elements, coordinates, velocities.
#[derive(Debug, Clone)]
pub struct Structure {
    pub box_lengths: [f64; 3],
    pub type_names: Vec<String>,
    pub types: Vec<usize>,
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
}

impl Structure {
    pub fn n_atoms(&self) -> usize {
        self.positions.len()
    }
}

/// FCC lattice (4 atoms per cubic cell); copper is `fcc("Cu", 3.615, ..)`.
pub fn fcc_lattice(element: &str, a: f64, cells: [usize; 3]) -> Structure {
    let basis = [
        [0.0, 0.0, 0.0],
        [0.5, 0.5, 0.0],
        [0.5, 0.0, 0.5],
        [0.0, 0.5, 0.5],
    ];
    let mut positions = Vec::new();
    for z in 0..cells[2] {
        for y in 0..cells[1] {
            for x in 0..cells[0] {
                for b in &basis {
                    positions.push([
                        (x as f64 + b[0]) * a,
                        (y as f64 + b[1]) * a,
                        (z as f64 + b[2]) * a,
                    ]);
                }
            }
        }
    }
    let n = positions.len();
    Structure {
        box_lengths: [
            cells[0] as f64 * a,
            cells[1] as f64 * a,
            cells[2] as f64 * a,
        ],
        type_names: vec![element.to_string()],
        types: vec![0; n],
        positions,
        velocities: vec![[0.0; 3]; n],
    }
}

/// Cubic-ice-like water placer: oxygens on a simple cubic lattice, two
/// hydrogens per oxygen with alternating orientations. The default spacing
/// 3.104 A reproduces liquid-water number density. Types follow the (O, H)
/// convention so the benchmark sel capacities {46, 92} line up.
pub fn water_lattice(a: f64, cells: [usize; 3]) -> Structure {
    // H positions from the ~0.96 A bond and ~104.5 degree angle
    let (dx, dy) = (0.7572, 0.5864);
    let mut positions = Vec::new();
    let mut types = Vec::new();
    for z in 0..cells[2] {
        for y in 0..cells[1] {
            for x in 0..cells[0] {
                let o = [
                    (x as f64 + 0.5) * a,
                    (y as f64 + 0.5) * a,
                    (z as f64 + 0.5) * a,
                ];
                let flip = if (x + y + z) % 2 == 0 { 1.0 } else { -1.0 };
                positions.push(o);
                positions.push([o[0] + flip * dx, o[1] + dy, o[2]]);
                positions.push([o[0] - flip * dx, o[1] + dy, o[2]]);
                types.push(0); // O
                types.push(1); // H
                types.push(1); // H
            }
        }
    }
    Structure {
        box_lengths: [
            cells[0] as f64 * a,
            cells[1] as f64 * a,
            cells[2] as f64 * a,
        ],
        type_names: vec!["O".to_string(), "H".to_string()],
        types,
        positions: positions.clone(),
        velocities: vec![[0.0; 3]; positions.len()],
    }
}

/// Maxwell-Boltzmann velocities at `temperature` with the center-of-mass
/// drift removed; `masses` indexed by type (amu).
pub fn maxwell_velocities(
    structure: &mut Structure,
    masses: &[f64],
    temperature: f64,
    seed: u64,
) -> Result<()> {
    if structure.types.iter().any(|&t| t >= masses.len()) {
        return Err(Error::invalid_input("type without a mass"));
    }
    if temperature < 0.0 {
        return Err(Error::invalid_input("negative temperature"));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let n = structure.n_atoms();
    for i in 0..n {
        let m = masses[structure.types[i]];
        let std = (KB * temperature / (m * MVV2E)).sqrt();
        for d in 0..3 {
            let z: f64 = rng.sample(StandardNormal);
            structure.velocities[i][d] = std * z;
        }
    }
    // remove net momentum
    let mut p = [0.0f64; 3];
    let mut mass_total = 0.0;
    for i in 0..n {
        let m = masses[structure.types[i]];
        mass_total += m;
        for d in 0..3 {
            p[d] += m * structure.velocities[i][d];
        }
    }
    if n > 0 {
        for i in 0..n {
            for d in 0..3 {
                structure.velocities[i][d] -= p[d] / mass_total;
            }
        }
    }
    Ok(())
}

/// Write one extended-XYZ frame: a count line, a comment carrying the box
/// lengths, then `element x y z vx vy vz` lines.
pub fn format_xyz(s: &Structure) -> String {
    let mut out = String::new();
    out.push_str(&format!("{}\n", s.n_atoms()));
    out.push_str(&format!(
        "box {} {} {}\n",
        s.box_lengths[0], s.box_lengths[1], s.box_lengths[2]
    ));
    for i in 0..s.n_atoms() {
        let p = s.positions[i];
        let v = s.velocities[i];
        out.push_str(&format!(
            "{} {} {} {} {} {} {}\n",
            s.type_names[s.types[i]], p[0], p[1], p[2], v[0], v[1], v[2]
        ));
    }
    out
}

pub fn write_xyz(s: &Structure, path: &Path) -> Result<()> {
    std::fs::write(path, format_xyz(s))?;
    Ok(())
}

/// Parse one or more concatenated extended-XYZ frames.
pub fn parse_xyz_frames(text: &str) -> Result<Vec<Structure>> {
    let mut lines = text.lines().enumerate().peekable();
    let mut frames = Vec::new();
    while let Some((lno, count_line)) = lines.next() {
        if count_line.trim().is_empty() {
            continue;
        }
        let n: usize = count_line.trim().parse().map_err(|_| Error::Parse {
            line: lno + 1,
            message: format!("expected atom count, got '{count_line}'"),
        })?;
        let (clno, comment) = lines.next().ok_or(Error::Parse {
            line: lno + 1,
            message: "missing comment line".into(),
        })?;
        let box_lengths = parse_box_comment(comment, clno + 1)?;
        let mut type_names: Vec<String> = Vec::new();
        let mut types = Vec::new();
        let mut positions = Vec::new();
        let mut velocities = Vec::new();
        for _ in 0..n {
            let (alno, atom_line) = lines.next().ok_or(Error::Parse {
                line: clno + 1,
                message: "frame truncated".into(),
            })?;
            let toks: Vec<&str> = atom_line.split_whitespace().collect();
            if toks.len() != 4 && toks.len() != 7 {
                return Err(Error::Parse {
                    line: alno + 1,
                    message: format!("expected 'element x y z [vx vy vz]', got '{atom_line}'"),
                });
            }
            let parse = |tok: &str| -> Result<f64> {
                tok.parse().map_err(|_| Error::Parse {
                    line: alno + 1,
                    message: format!("bad float '{tok}'"),
                })
            };
            let t = match type_names.iter().position(|e| e == toks[0]) {
                Some(t) => t,
                None => {
                    type_names.push(toks[0].to_string());
                    type_names.len() - 1
                }
            };
            types.push(t);
            positions.push([parse(toks[1])?, parse(toks[2])?, parse(toks[3])?]);
            if toks.len() == 7 {
                velocities.push([parse(toks[4])?, parse(toks[5])?, parse(toks[6])?]);
            } else {
                velocities.push([0.0; 3]);
            }
        }
        frames.push(Structure {
            box_lengths,
            type_names,
            types,
            positions,
            velocities,
        });
    }
    if frames.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no frames found".into(),
        });
    }
    Ok(frames)
}

fn parse_box_comment(comment: &str, line: usize) -> Result<[f64; 3]> {
    let toks: Vec<&str> = comment.split_whitespace().collect();
    if toks.len() >= 4 && toks[0] == "box" {
        let mut b = [0.0; 3];
        for d in 0..3 {
            b[d] = toks[d + 1].parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad box length '{}'", toks[d + 1]),
            })?;
        }
        return Ok(b);
    }
    Err(Error::Parse {
        line,
        message: format!("comment must carry 'box Lx Ly Lz', got '{comment}'"),
    })
}

pub fn read_xyz(path: &Path) -> Result<Structure> {
    let text = std::fs::read_to_string(path)?;
    let mut frames = parse_xyz_frames(&text)?;
    Ok(frames.remove(0))
}

pub fn read_xyz_frames(path: &Path) -> Result<Vec<Structure>> {
    let text = std::fs::read_to_string(path)?;
    parse_xyz_frames(&text)
}
