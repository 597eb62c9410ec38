import {
  CaptureOptions,
  DEFAULT_LABEL_ATTRIBUTE,
  Snapshot,
  SnapshotNode,
  Visibility,
  VISIBILITY_VALUES,
} from './types.js';

/**
 * The slice of a rendered element the capture needs.  Browser elements are
 * adapted via {@link fromDomElement}; tests feed plain objects.
 */
export interface ElementView {
  tagName: string;
  children: ElementView[];
  getAttribute(name: string): string | null;
  /** Document-relative bounding box in CSS pixels (scroll-independent). */
  rect(): { x: number; y: number; w: number; h: number };
  /** Computed style values after layout. */
  style(): { fontSize: string; fontWeight: string; visibility: string; cursor: string };
}

const BITMAP_SRC = /\.(png|jpe?g|gif)(\?.*)?$/i;
const VECTOR_SRC = /\.svg(\?.*)?$/i;
const ACTIVE_TAGS = new Set(['a', 'button', 'input', 'select', 'textarea']);

const TEXTUAL_WEIGHTS: Record<string, number> = {
  normal: 400,
  bold: 700,
  bolder: 700,
  lighter: 300,
};

export function mapFontWeight(value: string): number {
  const numeric = Number.parseFloat(value);
  let weight = Number.isFinite(numeric) ? numeric : TEXTUAL_WEIGHTS[value.trim().toLowerCase()];
  if (weight === undefined) {
    console.warn(`capture: unparsable font-weight ${JSON.stringify(value)}; using 400`);
    weight = 400;
  }
  return Math.min(900, Math.max(100, weight));
}

export function mapVisibility(value: string): Visibility {
  const v = value.trim().toLowerCase() as Visibility;
  if ((VISIBILITY_VALUES as readonly string[]).includes(v)) return v;
  console.warn(`capture: unknown visibility ${JSON.stringify(value)}; using "visible"`);
  return 'visible';
}

function isBitmapImage(el: ElementView): boolean {
  const src = el.getAttribute('src') ?? '';
  return el.tagName.toLowerCase() === 'img' && BITMAP_SRC.test(src);
}

function isVectorImage(el: ElementView): boolean {
  const tag = el.tagName.toLowerCase();
  if (tag === 'svg') return true;
  return tag === 'img' && VECTOR_SRC.test(el.getAttribute('src') ?? '');
}

/** Counts over the element and everything below it ("contained" read inclusively). */
function countImages(el: ElementView): { bitmap: number; vector: number } {
  let bitmap = isBitmapImage(el) ? 1 : 0;
  let vector = isVectorImage(el) ? 1 : 0;
  for (const child of el.children) {
    const sub = countImages(child);
    bitmap += sub.bitmap;
    vector += sub.vector;
  }
  return { bitmap, vector };
}

function toNode(el: ElementView, id: number, parent: number, labelAttribute: string): SnapshotNode {
  const style = el.style();
  const tag = el.tagName.toLowerCase();
  const counts = countImages(el);
  const rect = el.rect();
  const node: SnapshotNode = {
    id,
    parent,
    tag,
    bbox: { x: rect.x, y: rect.y, w: rect.w, h: rect.h },
    num_bitmap_images: counts.bitmap,
    num_vector_images: counts.vector,
    font_size: Number.parseFloat(style.fontSize) || 0,
    font_weight: mapFontWeight(style.fontWeight),
    visibility: mapVisibility(style.visibility),
    is_active: ACTIVE_TAGS.has(tag) || style.cursor === 'pointer',
  };
  const label = el.getAttribute(labelAttribute);
  if (label !== null && label !== '') node.label = label;
  return node;
}

/**
 * Walk a rendered tree and serialize it into snapshot-schema text.
 *
 * Nodes are emitted in pre-order with parent indices pointing backwards,
 * exactly as the ingestion side expects.  With includeInvisible=false,
 * elements whose computed visibility is "hidden" or "collapse" are skipped
 * together with their subtrees.
 */
export function captureSnapshot(root: ElementView, options: CaptureOptions = {}): Snapshot {
  if (!root) throw new Error('capture: root element is missing or detached');
  const labelAttribute = options.labelAttribute ?? DEFAULT_LABEL_ATTRIBUTE;
  if (!labelAttribute) throw new Error('capture: label attribute name must be nonempty');
  const includeInvisible = options.includeInvisible ?? true;

  const nodes: SnapshotNode[] = [];
  const walk = (el: ElementView, parent: number) => {
    const node = toNode(el, nodes.length, parent, labelAttribute);
    if (!includeInvisible && parent >= 0 && (node.visibility === 'hidden' || node.visibility === 'collapse')) {
      return;
    }
    nodes.push(node);
    const id = node.id;
    for (const child of el.children) walk(child, id);
  };
  walk(root, -1);

  return {
    version: 1,
    url: options.url ?? 'about:blank',
    region: options.region ?? 'unknown',
    nodes,
  };
}

export function captureSnapshotText(root: ElementView, options: CaptureOptions = {}): string {
  return JSON.stringify(captureSnapshot(root, options), null, 1);
}

interface WindowLike {
  scrollX: number;
  scrollY: number;
  getComputedStyle(el: Element): CSSStyleDeclaration;
}

/** Adapt a live DOM element; bounding boxes become document-relative. */
export function fromDomElement(el: Element, win: WindowLike): ElementView {
  if (!el.isConnected) throw new Error('capture: root element is detached from the document');
  const view: ElementView = {
    tagName: el.tagName,
    get children() {
      return Array.from(el.children).map((child) => fromDomElement(child, win));
    },
    getAttribute: (name) => el.getAttribute(name),
    rect: () => {
      const r = el.getBoundingClientRect();
      return { x: r.left + win.scrollX, y: r.top + win.scrollY, w: r.width, h: r.height };
    },
    style: () => {
      const s = win.getComputedStyle(el);
      return {
        fontSize: s.fontSize,
        fontWeight: s.fontWeight,
        visibility: s.visibility,
        cursor: s.cursor,
      };
    },
  };
  return view;
}

/** Entry point for a page context: capture from document.documentElement. */
export function captureDocument(doc: Document, options: CaptureOptions = {}): string {
  const win = doc.defaultView;
  if (!win || !doc.documentElement) throw new Error('capture: document has no view or root');
  return captureSnapshotText(fromDomElement(doc.documentElement, win), {
    url: doc.location?.href,
    ...options,
  });
}
