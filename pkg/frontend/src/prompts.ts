/** Prompt templating for class-name text embeddings. */

export const DEFAULT_TEMPLATE = 'a photo of a [CLASS]';

export class TemplateError extends Error {}

/** Fine-grained dataset names often arrive as "Boeing_747-300"; prompts use
 * plain words. The transformation is recorded in the run manifest. */
export function normalizeClassName(name: string): string {
  return name.replaceAll('_', ' ').toLowerCase().trim();
}

export function validateTemplate(template: string): void {
  const hits = template.split('[CLASS]').length - 1;
  if (hits !== 1) {
    throw new TemplateError(
      `template must contain the [CLASS] placeholder exactly once, found ${hits}: "${template}"`,
    );
  }
}

export function buildPrompts(template: string, classNames: string[]): string[] {
  validateTemplate(template);
  return classNames.map((name) => template.replace('[CLASS]', normalizeClassName(name)));
}
