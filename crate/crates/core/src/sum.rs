/// Neumaier-compensated accumulator. Summation order is fixed by the caller,
/// so results do not depend on thread scheduling.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

pub(crate) fn sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = Compensated::default();
    for v in it {
        acc.add(v);
    }
    acc.value()
}
