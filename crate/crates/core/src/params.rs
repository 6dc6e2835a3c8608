//! Named parameter storage with training groups.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::conv;
use crate::error::{dim_err, Error, Result};
use crate::rng::uniform_tensor;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Inn,
    PreEnhance,
    PostEnhance,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Inn, Group::PreEnhance, Group::PostEnhance];

    pub fn name(self) -> &'static str {
        match self {
            Group::Inn => "inn",
            Group::PreEnhance => "pre_enhance",
            Group::PostEnhance => "post_enhance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown parameter group {s:?}")))
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Subset of [`Group`]s.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct GroupSet(u8);

impl GroupSet {
    pub const NONE: GroupSet = GroupSet(0);
    pub const ALL: GroupSet = GroupSet(0b111);

    const fn bit(g: Group) -> u8 {
        match g {
            Group::Inn => 1,
            Group::PreEnhance => 2,
            Group::PostEnhance => 4,
        }
    }

    pub const fn only(g: Group) -> Self {
        GroupSet(Self::bit(g))
    }

    pub fn of(groups: &[Group]) -> Self {
        groups.iter().fold(Self::NONE, |s, &g| s.with(g))
    }

    pub const fn with(self, g: Group) -> Self {
        GroupSet(self.0 | Self::bit(g))
    }

    pub const fn without(self, g: Group) -> Self {
        GroupSet(self.0 & !Self::bit(g))
    }

    pub const fn contains(self, g: Group) -> bool {
        self.0 & Self::bit(g) != 0
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Group> {
        Group::ALL.into_iter().filter(move |&g| self.contains(g))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub group: Group,
    pub value: Tensor,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, group: Group, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        self.entries.push(ParamEntry { name, group, value });
        ParamId(self.entries.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    pub fn ids_in(&self, groups: GroupSet) -> impl Iterator<Item = ParamId> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(_, e)| groups.contains(e.group))
            .map(|(i, _)| ParamId(i))
    }

    pub fn count_scalars(&self, groups: GroupSet) -> usize {
        self.ids_in(groups).map(|id| self.value(id).len()).sum()
    }

    /// Overwrite the value of `name`, checking the shape matches.
    pub fn assign(&mut self, name: &str, value: Tensor) -> Result<()> {
        let id = self
            .find(name)
            .ok_or_else(|| Error::Config(alloc::format!("no parameter named {name:?}")))?;
        let slot = &mut self.entries[id.0].value;
        if slot.shape() != value.shape() {
            return Err(dim_err!(
                "parameter {name}: stored {:?}, loaded {:?}",
                slot.shape(),
                value.shape()
            ));
        }
        *slot = value;
        Ok(())
    }
}

/// Conv layer parameters: uniform in `+-1/sqrt(fan_in)`, or all zero.
pub fn conv_layer<R: Rng + ?Sized>(
    store: &mut ParamStore,
    rng: &mut R,
    prefix: &str,
    group: Group,
    cin: usize,
    cout: usize,
    zero: bool,
) -> (ParamId, ParamId) {
    let wshape = conv::weight_shape(cin, cout);
    let bshape = Shape::new(cout, 1, 1, 1);
    let (w, b) = if zero {
        (Tensor::zeros(wshape), Tensor::zeros(bshape))
    } else {
        let bound = 1.0 / libm::sqrtf((cin * conv::KERNEL * conv::KERNEL) as f32);
        (
            uniform_tensor(rng, wshape, -bound, bound),
            uniform_tensor(rng, bshape, -bound, bound),
        )
    };
    let w = store.add(alloc::format!("{prefix}.weight"), group, w);
    let b = store.add(alloc::format!("{prefix}.bias"), group, b);
    (w, b)
}
