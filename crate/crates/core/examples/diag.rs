use blockforge::clifford::{CliffordOp, Gate, Stage};
use blockforge::gf2::{triangular_complete, BitMatrix, BitVec};
use blockforge::pauli::PauliOp;
use blockforge::tableau::StabilizerTableau;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn all_upper(k: usize) -> Vec<BitMatrix> {
    let free = k * (k - 1) / 2;
    let mut out = Vec::new();
    for mask in 0u64..(1 << free) {
        let mut u = BitMatrix::identity(k);
        let mut bit = 0;
        for i in 0..k {
            for j in i + 1..k {
                if mask >> bit & 1 == 1 {
                    u.set(i, j, true);
                }
                bit += 1;
            }
        }
        out.push(u);
    }
    out
}

fn op(l: usize, xs: &[usize], zs: &[usize]) -> PauliOp {
    let mut a = BitVec::zeros(l);
    let mut b = BitVec::zeros(l);
    for &q in xs { a.set(q, true); }
    for &q in zs { b.set(q, true); }
    PauliOp::hermitian(a, b, false)
}

fn main() {
    let mut rng = StdRng::seed_from_u64(5);
    let mut fails = 0;
    let mut total = 0;
    for k in 1..=3usize {
        for u in all_upper(k) {
            for _ in 0..10 {
                total += 1;
                let l = 2 * k;
                // random data state on Q half
                let c = CliffordOp::random(k, 20, &mut rng);
                let mut data = StabilizerTableau::zeros(k);
                data.apply_clifford(&c).unwrap();
                let mut t = StabilizerTableau::zeros(k).tensor(&data);
                // oracle: CNOT circuit on the Q half, aux -> |+>
                let mut oracle = StabilizerTableau::pluses(k).tensor(&{
                    let mut d2 = data.clone();
                    let gates: Vec<Gate> = Stage::C { u: u.clone() }.gates(k);
                    d2.apply_gates(&gates).unwrap();
                    d2
                });
                // chain: set1 (X_A_j X_Q_j, partner Z_A_j)
                for j in 0..k {
                    let w = op(l, &[j, k + j], &[]);
                    let out = t.measure(&w, &mut rng).unwrap();
                    if out { t.apply_pauli(&op(l, &[], &[j])); }
                }
                // set2: raw rows (0 0 | I L1), transform L2, partners set1_j
                let uti = u.transpose().invert().unwrap();
                let l1 = uti.add(&BitMatrix::identity(k));
                let (l2, _) = triangular_complete(&l1).unwrap();
                let mut raw_out = BitVec::zeros(k);
                for j in 0..k {
                    let mut zs = vec![j];
                    zs.extend(l1.row(j).iter_ones().map(|c| k + c));
                    let w = op(l, &[], &zs);
                    raw_out.set(j, t.measure(&w, &mut rng).unwrap());
                }
                for j in 0..k {
                    let mut o = false;
                    for i in l2.row(j).iter_ones() { o ^= raw_out.get(i); }
                    if o { t.apply_pauli(&op(l, &[j, k + j], &[])); }
                }
                // set3: X_A_j, partners raw set2_j
                for j in 0..k {
                    let w = op(l, &[j], &[]);
                    let out = t.measure(&w, &mut rng).unwrap();
                    if out {
                        let mut zs = vec![j];
                        zs.extend(l1.row(j).iter_ones().map(|c| k + c));
                        t.apply_pauli(&op(l, &[], &zs));
                    }
                }
                if !t.states_equal(&oracle).unwrap() {
                    fails += 1;
                    if fails <= 2 {
                        println!("MISMATCH k={k} u=\n{u:?}\ngot:\n{t:?}\nwant:\n{oracle:?}");
                    }
                }
            }
        }
    }
    println!("fails: {fails}/{total}");
}
